"""Co-simulation of a discrete-event feeding controller with a continuous-time
mobile feeding robot, plus a design-space sweep over feeder-arm candidates."""

__version__ = "0.1.0"
