from flowdance.nn.backend import kernel_backend

__all__ = ["kernel_backend"]
