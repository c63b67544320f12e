"""
Source Package
==============

Main source package for the pulse-level compilation toolchain.
"""
