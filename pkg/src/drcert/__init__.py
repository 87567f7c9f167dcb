"""drcert: certified bounds on Wasserstein distributionally robust risk.

Lower/upper bounds on the robust-empirical risk gap are built from least
star-shaped and least concave majorants of loss growth-rate curves, with a
layer-wise adversarial-score calculus for small networks, Monte-Carlo
Rademacher estimators, and an exact discrete transport oracle for validation.
"""

__version__ = "0.1.0"
