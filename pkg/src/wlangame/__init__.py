"""Equilibria and simulation of joint rate/contention-window selection in
multi-rate 802.11 WLANs under reactive (tit-for-tat) strategies."""

from .backend import NAME as backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
