"""
CLI Package
===========

Command-line front end and schedule plotting.
"""
