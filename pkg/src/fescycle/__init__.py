"""Simulated closed-loop FES cycling rig.

A software twin of a stimulation trike bench: a crank encoder decoded from
polled lines, force and mechanomyography sensor models, a six-channel
stimulation scheduler with hard safety clamps, a cadence controller and a
rigid-crank plant, tied together by a fixed-rate loop that can run faster
than real time for experiments or paced for interactive serving.
"""

__version__ = "0.1.0"
