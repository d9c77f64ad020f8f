"""Neural-network observer toolkit for a uniaxial gyro stabilizer."""

__version__ = "0.1.0"
