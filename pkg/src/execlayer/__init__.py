"""Snapshot-isolated execution layer and single-machine plant simulator for
event-driven dispatching under delayed observations."""

__version__ = "0.1.0"
