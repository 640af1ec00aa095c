"""Data-driven equation discovery for hysteretic oscillators.

Subpackages cover the full workflow: simulation of Bouc-Wen style
systems (:mod:`hystereq.simulate`), learning of the unmeasured internal
state through a differentiable integrator (:mod:`hystereq.learner`),
symbolic regression of closed-form laws (:mod:`hystereq.symreg`), a
sparse-regression baseline (:mod:`hystereq.sindy`), and evaluation by
closed-loop resimulation (:mod:`hystereq.model`, :mod:`hystereq.metrics`).
"""

__version__ = "0.1.0"
