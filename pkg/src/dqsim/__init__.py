"""Distributed quantum sensing simulator with tamper-detection thresholds.

Library layout:

- ``qcore``     exact states, observables, channels, measurements
- ``metrics``   faithfulness bounds, sequential-measurement distance tools
- ``stats``     counts-based correlators and error propagation
- ``adversary`` pluggable eavesdropper strategies
- ``protocol``  round-by-round execution of the sensing protocols
- ``cli``       scenario runner, sweeps and bound reports
"""

from . import adversary, cli, metrics, protocol, qcore, stats

__all__ = ["qcore", "metrics", "stats", "adversary", "protocol", "cli"]
__version__ = "0.1.0"
