"""Link-level simulation of MIMO links assisted by RIS elements mounted on user devices."""

__version__ = "0.1.0"
