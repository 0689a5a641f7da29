"""Crosstalk-resilient movable-antenna ISAC simulator and optimizer.

Subpackages cover the antenna geometry (`array`), random channels and the
coupling model (`channel`), SINR/CRB metrics (`metrics`), the constrained
MDP (`env`), a small numpy neural substrate (`nn`), the TD3 agent (`td3`),
and the experiment harness with its CLI (`harness`, `cli`).
"""

__version__ = "0.1.0"

SPEED_OF_LIGHT = 3e8  # m/s
