"""Fleet tracking control center for GPS/GPRS buoy locator terminals."""

__version__ = "0.1.0"
