# Sphinx configuration for the bb84sim API reference.
#
# https://www.sphinx-doc.org/en/master/usage/configuration.html

import os
import sys

sys.path.insert(0, os.path.abspath('../../src'))

from bb84sim import __version__  # noqa: E402

# -- Project information -----------------------------------------------------

project = 'bb84sim'
copyright = '2025 bb84sim developers'
author = 'bb84sim developers'
release = __version__
version = '.'.join(__version__.split('.')[:2])


# -- General configuration ---------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.napoleon',
    'sphinx.ext.mathjax',
    'sphinx.ext.intersphinx',
    'sphinx.ext.viewcode',
    'pydata_sphinx_theme',
]

root_doc = 'index'
exclude_patterns = []

# Google-style docstrings
napoleon_google_docstring = True
napoleon_numpy_docstring = False
napoleon_use_rtype = False

autodoc_member_order = 'bysource'
autodoc_typehints = 'description'
autodoc_default_options = {
    'members': True,
    'show-inheritance': True,
}

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable/', None),
    'scipy': ('https://docs.scipy.org/doc/scipy/', None),
    'pandas': ('https://pandas.pydata.org/docs/', None),
}


# -- Options for HTML output -------------------------------------------------

html_theme = 'pydata_sphinx_theme'
html_title = f'bb84sim {release}'
html_theme_options = {
    'navigation_depth': 2,
    'show_toc_level': 2,
}
