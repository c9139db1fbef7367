"""Lasso screening and GIC selection for binary-response regression."""
