"""PointFormer core package."""
