"""boxflow: exact limiting unipotent flows of polynomial trajectories and
a numerical equidistribution harness on the space of unimodular lattices."""

__version__ = "0.1.0"
