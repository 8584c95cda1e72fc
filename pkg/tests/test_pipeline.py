import numpy as np
import pytest

from floatrefine.floating_mesh import FloatingMesh, mesh_from_grid
from floatrefine.image_core import PSNR_CAP, psnr
from floatrefine.pipeline import RefineRequest, StageError, refine
from floatrefine.strength_model import PUBLISHED_DEFAULTS, default_params


def smooth_image(h=40, w=48):
    ii, jj = np.indices((h, w))
    return 128 + 50 * np.sin(ii / 6.0) * np.cos(jj / 9.0)


def test_full_grid_mesh_saturates():
    img = smooth_image()
    res = refine(RefineRequest(mesh_from_grid(img), 48, 40, "ni"))
    assert res.strength.max() < 0.05
    assert psnr(img, res.initial) >= PSNR_CAP - 0.5
    assert psnr(img, res.refined) >= PSNR_CAP - 0.5


@pytest.mark.parametrize("method", ["li", "ci"])
def test_full_grid_mesh_mild_refinement(method):
    # default parameters for these methods leave sigma^2 around 0.01-0.1 even at full density
    img = smooth_image()
    res = refine(RefineRequest(mesh_from_grid(img), 48, 40, method))
    assert np.median(res.strength) < 0.2
    assert psnr(img, res.initial) == PSNR_CAP
    assert psnr(img, res.refined) > 70


def test_left_half_mesh_raises_right_strength(rng):
    x, y = rng.random(600) * 16, rng.random(600) * 31
    m = FloatingMesh(x, y, 100 + x)
    res = refine(RefineRequest(m, 32, 32, "li", denoiser="blend"))
    assert res.strength[:, 24:].min() > res.strength[:, :12].max()
    assert np.all(res.outside[:, 20:])


def test_deterministic(rng):
    img = smooth_image()
    x, y = rng.random(700) * 47, rng.random(700) * 39
    m = FloatingMesh(x, y, img[np.round(y).astype(int), np.round(x).astype(int)])
    a = refine(RefineRequest(m, 48, 40, "ni"))
    b = refine(RefineRequest(m, 48, 40, "ni"), threads=3)
    np.testing.assert_array_equal(a.refined, b.refined)
    np.testing.assert_array_equal(a.xi.values, b.xi.values)


def test_defaults_and_mismatch_warning(caplog):
    m = mesh_from_grid(smooth_image(12, 12))
    req = RefineRequest(m, 12, 12, "ni")
    assert req.params == PUBLISHED_DEFAULTS[req.method]
    with caplog.at_level("WARNING"):
        RefineRequest(m, 12, 12, "ni", params=default_params("ci"))
    assert "fitted for CI" in caplog.text


def test_stage_labels():
    bad = FloatingMesh([0.0, 1.0, 2.0], [0.0, 1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(StageError, match="^triangulation: degenerate point set") as err:
        refine(RefineRequest(bad, 4, 4))
    assert err.value.stage == "triangulation"
    ok = mesh_from_grid(smooth_image(12, 12))
    with pytest.raises(StageError, match="^effective_data:"):
        refine(RefineRequest(ok, 12, 12, "li", truncation_radius=-1.0))
