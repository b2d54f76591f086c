"""Deep attention-guided graph clustering with dual self-supervision."""
