"""Fixture images and request files for adapter tests."""

from __future__ import annotations

from pathlib import Path

import pytest
from PIL import Image


@pytest.fixture
def image_dir(tmp_path) -> Path:
    """Four tiny solid-color images with COCO-style numeric names."""
    root = tmp_path / "images"
    root.mkdir()
    colors = [(200, 30, 30), (30, 200, 30), (30, 30, 200), (210, 210, 40)]
    for i, color in enumerate(colors, start=1):
        Image.new("RGB", (12, 12), color).save(root / f"COCO_val2014_{i:012d}.png")
    return root
