"""Q-learning path planning on raster maps with PACO Q-table seeding and UCH reward shaping."""

__version__ = "0.1.0"
