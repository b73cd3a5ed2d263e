"""Wi-Fi CSI phase sanitization, class-conditional diffusion augmentation and
SimpleViTFi classification."""
__version__ = "0.1.0"
