"""Likelihood-guided inverse design with a probabilistic surrogate.

Submodules: ``core`` (data types), ``oracle`` (toy simulator), ``surrogate``,
``likelihood``, ``initsearch`` (PSO), ``sampler`` (Metropolis), ``evaluation``,
``pipeline`` and ``cli``. Importing the package itself stays light so the CLI
can cap BLAS threads before numpy loads.
"""

__version__ = "0.1.0"
