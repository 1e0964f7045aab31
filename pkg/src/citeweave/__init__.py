"""citeweave: harvest open bibliographic data, build candidate/commission
citation networks, and rank which overlap metrics track peer-review outcomes."""

__version__ = "0.1.0"
