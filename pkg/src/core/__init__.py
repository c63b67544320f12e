"""
Core Package
============

Pulse model, gate lowering, passes, exchange format, device interface,
simulator and control VQE.
"""
