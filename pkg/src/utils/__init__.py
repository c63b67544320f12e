"""
Utilities Package
=================

Configuration, structured logging and file loaders.
"""
