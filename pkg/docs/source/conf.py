# Configuration file for the Sphinx documentation builder.
#
# Full list of options: http://www.sphinx-doc.org/en/master/config

# -- Project information -----------------------------------------------------

project = 'bsde-cert'
copyright = '2024, bsde-cert developers'
author = 'bsde-cert developers'

version = '0.3'
release = '0.3.0'


# -- General configuration ---------------------------------------------------

extensions = [
]

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'
language = 'en'
exclude_patterns = []
pygments_style = 'sphinx'


# -- Options for HTML output -------------------------------------------------

html_theme = 'sphinx_rtd_theme'
html_static_path = ['_static']
htmlhelp_basename = 'bsdecertdoc'


# -- Options for LaTeX output ------------------------------------------------

latex_elements = {}

latex_documents = [
    (master_doc, 'bsde-cert.tex', 'bsde-cert Documentation',
     author, 'manual'),
]


# -- Options for manual page output ------------------------------------------

man_pages = [
    (master_doc, 'bsde-cert', 'bsde-cert Documentation',
     [author], 1)
]
