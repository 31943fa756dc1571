"""tfodom: transformer-fusion LiDAR-inertial odometry at desk scale."""

__version__ = "0.1.0"
