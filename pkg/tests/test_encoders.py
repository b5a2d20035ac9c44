import pytest
import torch

from demakeup.encoders import (
    BackendUnavailableError,
    DuplicateBackendError,
    PretrainedClipAdapter,
    TestDoubleFace,
    TestDoubleImageText,
    TestDoubleSpec,
    UnknownBackendError,
    available_backends,
    build_backend,
    cache_dir,
    l2_normalize,
    lookup_backend,
    register_backend,
    resize_to,
    unregister_backend,
)
from demakeup.losses import PromptPair


def test_doubles_are_deterministic():
    x = torch.rand(2, 3, 32, 32, dtype=torch.float64)
    assert torch.equal(TestDoubleImageText().encode_image(x), TestDoubleImageText().encode_image(x))
    assert torch.equal(TestDoubleFace().encode(x), TestDoubleFace().encode(x))
    assert torch.equal(TestDoubleImageText().encode_text("abc"), TestDoubleImageText().encode_text("abc"))
    assert not torch.equal(TestDoubleImageText(TestDoubleSpec(seed=5)).encode_image(x), TestDoubleImageText().encode_image(x))


def test_embeddings_are_unit_norm(image_text, face):
    x = torch.rand(3, 3, 64, 64, dtype=torch.float64)
    for e in (image_text.encode_image(x), face.encode(x), image_text.encode_text("hello")[None]):
        assert torch.allclose(e.norm(dim=-1), torch.ones(e.shape[0], dtype=e.dtype), atol=1e-12)


def test_default_prompts_are_distinguishable(image_text):
    p = PromptPair()
    a, b = image_text.encode_text(p.source_text), image_text.encode_text(p.target_text)
    assert abs(float(a @ b)) < 0.99


def test_resize_and_normalize():
    x = torch.rand(1, 3, 32, 32)
    assert resize_to(x, 8).shape == (1, 3, 8, 8)
    assert resize_to(x, 64).shape == (1, 3, 64, 64)
    assert resize_to(x, 32) is x or torch.equal(resize_to(x, 32), x)
    assert torch.allclose(resize_to(torch.full((1, 3, 16, 16), 0.3), 4), torch.full((1, 3, 4, 4), 0.3))
    assert torch.allclose(l2_normalize(torch.tensor([3.0, 4.0])), torch.tensor([0.6, 0.8]))


def test_registry_lookup_and_errors():
    assert "test-double" in available_backends("image_text")
    assert isinstance(build_backend("test-double", "image_text"), TestDoubleImageText)
    with pytest.raises(UnknownBackendError):
        lookup_backend("nope", "face")
    with pytest.raises(DuplicateBackendError):
        register_backend("test-double", TestDoubleFace, "face")
    with pytest.raises(ValueError):
        register_backend("x", TestDoubleFace, "bogus")
    register_backend("mine", lambda: "ok", "face")
    try:
        assert build_backend("mine", "face") == "ok"
    finally:
        unregister_backend("mine", "face")
    assert "mine" not in available_backends("face")


def test_cache_dir_env(monkeypatch, tmp_path):
    monkeypatch.setenv("DIFFCLEAN_CACHE", str(tmp_path))
    assert cache_dir() == tmp_path
    with pytest.raises(BackendUnavailableError):
        PretrainedClipAdapter()
