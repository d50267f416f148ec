"""Variable-speed-limit following for a connected automated vehicle.

Subpackages and modules:

* ``corridor``: gantry layout, corridor polygon and heading checks.
* ``feed``: update store, periodic snapshot service, HTTP front end and polling client.
* ``gps2vsl``: set-and-hold relevant-gantry state machine and posted-speed lookup.
* ``setpoint``: source mux and rate-limited ramp.
* ``controllers``: nominal speed tracker with a barrier-function safety filter.
* ``vehicles``, ``simulation``, ``scenario``: plant models and the closed-loop harness.
* ``metrics``: rise/fall events and per-segment speed statistics.
"""

__version__ = "0.1.0"
