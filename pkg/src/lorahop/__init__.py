"""lorahop: trace-driven simulation of opportunistic data forwarding in
mobile LoRaWAN networks with static gateways."""

__version__ = "0.1.0"
