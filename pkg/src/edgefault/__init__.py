"""edgefault: host-fault prediction for edge clusters.

A deterministic cluster simulator produces labeled host-status traces; a
dual-path model (expert mixture over raw features, graph attention over task
migrations, fused by cross attention) learns to detect and classify host
faults; training runs offline with a staged prototype-update scheme, and an
online tuner adapts the expert population to a live stream.
"""

__version__ = "0.1.0"
