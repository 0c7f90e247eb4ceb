"""Desk-scale Dragonfly simulator with application-aware routing selection."""
