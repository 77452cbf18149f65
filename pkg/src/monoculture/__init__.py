"""Random Serial Dictatorship games with ranking advice.

Exact and Monte Carlo analysis of one-sided hiring markets in which firms
choose ranking technologies (shared vendors or private evaluators), with
tools to certify stochastic consistency of rankings and to measure how
much welfare equilibrium play loses against the social optimum.
"""

__version__ = "0.1.0"
