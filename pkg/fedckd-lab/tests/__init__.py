"""
FedCKD Lab tests.

One module per concern; long desk-scale trend checks carry the `slow`
marker and are deselected by default.
"""
