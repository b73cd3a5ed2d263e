"""Compute-device selection via the ``CSIAUG_DEVICE`` environment variable."""
import os

import torch


def default_device() -> torch.device:
    return torch.device(os.environ.get("CSIAUG_DEVICE", "cpu"))
