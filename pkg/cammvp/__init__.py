"""camm-vp: steady states, scaling laws and shell dynamics of Camm-type
Vlasov-Poisson models."""

__version__ = "0.1.0"
