"""PointFormer: point clouds through a frozen transformer backbone with bottleneck adapters."""

__version__ = "0.1.0"
__app_name__ = "PointFormer"
