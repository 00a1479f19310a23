"""Mode-coupling spectra of a Fabry-Perot cavity with a tilted dielectric membrane."""

__version__ = "0.1.0"
