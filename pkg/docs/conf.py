"""Configuration file for the Sphinx documentation builder."""

from importlib import metadata

import sphinx_rtd_theme

import qavc

# pylint: disable=invalid-name

# General configuration

project = "qavc"
author = "The qavc developers"
# pylint: disable=redefined-builtin
copyright = f"2024, {author}"
# pylint: enable=redefined-builtin

version = metadata.version(qavc.__package__)
release = version

templates_path = ["_templates"]
exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]

# -- General configuration

extensions = [
    "sphinx.ext.duration",
    "sphinx.ext.doctest",
    "sphinx.ext.autodoc",
    "sphinx.ext.autosummary",
    "sphinx.ext.napoleon",
    "sphinx.ext.mathjax",
    "myst_parser",
]

# -- Options for HTML output

html_theme = "sphinx_rtd_theme"
html_theme_path = [sphinx_rtd_theme.get_html_theme_path()]

# -- Options for autosummary extension

autosummary_generate = True

# -- Options for MyST

myst_heading_anchors = 5
