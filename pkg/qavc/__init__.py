"""qavc: a numerical laboratory for jammed quantum channels."""
