import numpy as np
import pytest
from scipy import ndimage

from maskforge.edges import canny
from maskforge.errors import MaskForgeError
from maskforge.masks import invert

from conftest import make_blob, make_disk, make_square


def boundary_of(mask):
    inner = ndimage.binary_erosion(mask.astype(bool))
    return mask.astype(bool) & ~inner


def test_all_zeros_gives_empty():
    assert canny(np.zeros((16, 16), np.uint8)).sum() == 0


def test_all_ones_gives_empty():
    # no background anywhere, so no interface pixels survive
    assert canny(np.ones((16, 16), np.uint8)).sum() == 0


def test_square_ring_pixel_count():
    m = np.zeros((16, 16), np.uint8)
    m[4:12, 4:12] = 1
    e = canny(m)
    # boundary-trace oracle: the square's boundary ring has 28 pixels
    ring = boundary_of(m)
    assert ring.sum() == 28
    assert abs(int(e.sum()) - 28) <= 4


def test_edges_within_one_pixel_of_boundary(rng):
    for i in range(10):
        m = make_blob(i)
        e = canny(m).astype(bool)
        assert e.any()
        dt = ndimage.distance_transform_edt(~boundary_of(m))
        assert dt[e].max() <= 1.0 + 1e-9


def test_edge_pixels_touch_both_classes():
    for m in (make_disk(12), make_square(10), make_blob(5)):
        e = canny(m)
        fg = m.astype(bool)
        near_fg = ndimage.binary_dilation(fg, np.ones((3, 3), bool))
        near_bg = ndimage.binary_dilation(~fg, np.ones((3, 3), bool))
        sel = e.astype(bool)
        assert (near_fg[sel] & near_bg[sel]).all()


def test_deterministic():
    m = make_blob(3)
    assert np.array_equal(canny(m), canny(m))


def test_threshold_order_enforced():
    with pytest.raises(MaskForgeError):
        canny(make_disk(5), low=0.5, high=0.2)
    with pytest.raises(MaskForgeError):
        canny(make_disk(5), low=-0.1, high=0.2)


def test_inverted_mask_same_boundary():
    m = make_disk(12)
    # edges live on the fg/bg interface, so inversion moves them by <= 1 px
    e1 = canny(m).astype(bool)
    e2 = canny(invert(m)).astype(bool)
    dt = ndimage.distance_transform_edt(~e1)
    assert dt[e2].max() <= 1.5
