"""Pull-based IoT discovery protocol engine and broadcast-network simulator.

Subpackages by concern: crypto (primitives), wire (byte layouts),
registration (provisioning and manifests), device (pull/push/blend state
machine), agent (user-side verification), inventory (owner-solicited
encrypted variant), keytree (owner key retrieval), simnet (discrete-event
network), analytics (closed-form usage and bandwidth models), cli.
"""

__version__ = "0.1.0"
