"""Feature backends.

`stub` is a deterministic hash-seeded generator: it produces schema-valid
detections, embeddings, and predictions from content digests alone, so the
whole file protocol can be exercised offline. The torch/transformers backends
wrap real checkpoints and are imported lazily; they fail with a clear message
when the model assets are not available.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

OBJECT_SCORE_MIN = 0.8
ATTRIBUTE_SCORE_MIN = 0.4
MAX_OBJECTS = 36

# Compact stand-in for the detector's category vocabulary.
STUB_CATEGORIES = [
    "person", "dog", "cat", "giraffe", "zebra", "horse", "bird", "car",
    "truck", "bench", "tree", "sign", "umbrella", "sock", "shirt", "hat",
    "knife", "fork", "spoon", "cup", "plate", "pizza", "donut", "desk",
    "chair", "window", "door", "traffic light", "girl", "boy",
]
STUB_COLORS = ["red", "blue", "green", "yellow", "black", "white", "brown", "orange"]


def _digest_rng(*parts: bytes) -> np.random.Generator:
    digest = hashlib.sha256(b"\x1f".join(parts)).digest()
    return np.random.default_rng(np.frombuffer(digest, dtype=np.uint64))


@dataclass
class StubBackend:
    """Deterministic content-hash features; no model, no network."""

    name: str = "stub"
    embedding_dim: int = 32

    def checksum(self) -> str:
        return "deterministic-sha256-stub"

    def detect(self, image_bytes: bytes) -> list[dict]:
        rng = _digest_rng(b"detect", image_bytes)
        count = int(rng.integers(2, 8))
        picks = rng.choice(len(STUB_CATEGORIES), size=min(count, MAX_OBJECTS), replace=True)
        objects = []
        for k in picks:
            score = float(OBJECT_SCORE_MIN + (1.0 - OBJECT_SCORE_MIN) * rng.random())
            attributes = []
            if rng.random() < 0.6:
                color = STUB_COLORS[int(rng.integers(0, len(STUB_COLORS)))]
                attributes.append({
                    "name": color,
                    "score": float(ATTRIBUTE_SCORE_MIN + (1.0 - ATTRIBUTE_SCORE_MIN) * rng.random()),
                })
            objects.append({
                "category": STUB_CATEGORIES[int(k)],
                "score": round(score, 6),
                "attributes": attributes,
            })
        return objects

    def embed_texts(self, texts: list[str]) -> np.ndarray:
        rows = np.empty((len(texts), self.embedding_dim), dtype=np.float64)
        for i, text in enumerate(texts):
            rng = _digest_rng(b"text", text.encode("utf-8"))
            rows[i] = rng.normal(size=self.embedding_dim)
        return rows

    def embed_images(self, blobs: list[bytes]) -> np.ndarray:
        rows = np.empty((len(blobs), self.embedding_dim), dtype=np.float64)
        for i, blob in enumerate(blobs):
            rng = _digest_rng(b"imag", blob)
            rows[i] = rng.normal(size=self.embedding_dim)
        return rows

    def predict_answers(self, teacher_name: str, questions: list[str], vocab_size: int) -> np.ndarray:
        rows = np.empty((len(questions), vocab_size), dtype=np.float64)
        for i, text in enumerate(questions):
            rng = _digest_rng(b"pred", teacher_name.encode("utf-8"), text.encode("utf-8"))
            rows[i] = rng.dirichlet(np.ones(vocab_size))
        return rows


@dataclass
class TorchvisionDetectorBackend:
    """Detection via a torchvision checkpoint (no attribute head: objects only)."""

    weights: str = "DEFAULT"
    name: str = "torchvision-fasterrcnn_resnet50_fpn"
    score_min: float = OBJECT_SCORE_MIN

    def __post_init__(self):
        try:
            import torch  # noqa: F401
            from torchvision.models import detection as tv_detection
        except ImportError as exc:
            raise RuntimeError(f"torchvision backend unavailable: {exc}") from exc
        try:
            weights = tv_detection.FasterRCNN_ResNet50_FPN_Weights[self.weights] \
                if self.weights != "DEFAULT" else tv_detection.FasterRCNN_ResNet50_FPN_Weights.DEFAULT
            self._model = tv_detection.fasterrcnn_resnet50_fpn(weights=weights).eval()
            self._categories = weights.meta["categories"]
        except Exception as exc:  # checkpoint missing / no network
            raise RuntimeError(f"could not load detector weights ({exc})") from exc

    def checksum(self) -> str:
        return f"torchvision:{self.weights}"

    def detect(self, image_bytes: bytes) -> list[dict]:
        import io

        import torch
        from PIL import Image
        from torchvision.transforms.functional import to_tensor

        image = Image.open(io.BytesIO(image_bytes)).convert("RGB")
        with torch.no_grad():
            (pred,) = self._model([to_tensor(image)])
        objects = []
        for label, score in zip(pred["labels"].tolist(), pred["scores"].tolist()):
            if score < self.score_min or len(objects) >= MAX_OBJECTS:
                continue
            objects.append({
                "category": self._categories[label].lower(),
                "score": float(score),
                "attributes": [],  # this checkpoint has no attribute head
            })
        return objects


@dataclass
class HfClipBackend:
    """Text/image embeddings from a CLIP checkpoint (local path or cached name)."""

    model_name: str = "openai/clip-vit-base-patch32"
    name: str = "hf-clip"

    def __post_init__(self):
        try:
            import torch  # noqa: F401
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise RuntimeError(f"transformers backend unavailable: {exc}") from exc
        try:
            self._model = CLIPModel.from_pretrained(self.model_name).eval()
            self._processor = CLIPProcessor.from_pretrained(self.model_name)
        except Exception as exc:
            raise RuntimeError(f"could not load CLIP checkpoint {self.model_name!r} ({exc})") from exc

    def checksum(self) -> str:
        return f"hf:{self.model_name}"

    def embed_texts(self, texts: list[str]) -> np.ndarray:
        import torch

        with torch.no_grad():
            inputs = self._processor(text=texts, return_tensors="pt", padding=True, truncation=True)
            features = self._model.get_text_features(**inputs)
        return features.cpu().numpy().astype(np.float64)

    def embed_images(self, blobs: list[bytes]) -> np.ndarray:
        import io

        import torch
        from PIL import Image

        images = [Image.open(io.BytesIO(b)).convert("RGB") for b in blobs]
        with torch.no_grad():
            inputs = self._processor(images=images, return_tensors="pt")
            features = self._model.get_image_features(**inputs)
        return features.cpu().numpy().astype(np.float64)


def entrypoint_predictor(spec: str):
    """Resolve "module:function" into a callable(teacher, questions, vocab_size) -> rows."""
    module_name, _, func_name = spec.partition(":")
    if not module_name or not func_name:
        raise ValueError(f"expected module:function, got {spec!r}")
    import importlib

    module = importlib.import_module(module_name)
    return getattr(module, func_name)


def make_backend(kind: str, **kwargs):
    if kind == "stub":
        return StubBackend(**kwargs)
    if kind == "torchvision":
        return TorchvisionDetectorBackend(**kwargs)
    if kind == "hf-clip":
        return HfClipBackend(**kwargs)
    raise ValueError(f"unknown backend {kind!r}")
