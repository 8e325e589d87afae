"""Wheeled-legged quadruped locomotion stack.

terrain estimation -> contact scheduling -> foothold QP -> ZMP spline SQP ->
hierarchical whole-body control -> joint torques, closed around a rigid-body simulator.
"""

__version__ = "0.1.0"
