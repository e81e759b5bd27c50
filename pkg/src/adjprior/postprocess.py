"""Keep each label's largest 6-connected component and fill enclosed background holes."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from adjprior.metrics import SIX_CONNECTED
from adjprior.validation import check_label_in_range
from adjprior.volumes import LabelMap


def _largest_component_array(vox: np.ndarray, label: int) -> np.ndarray:
    mask = vox == label
    comps, n = ndimage.label(mask, structure=SIX_CONNECTED)
    if n <= 1:
        return vox
    sizes = np.bincount(comps.ravel())[1:]
    # ndimage.label numbers components in C order of [x, y, z], so the first
    # maximum is the component holding the lexicographically smallest voxel
    keep = int(np.argmax(sizes)) + 1
    out = vox.copy()
    out[mask & (comps != keep)] = 0
    return out


def _enclosed_background(vox: np.ndarray) -> tuple[np.ndarray, int, np.ndarray]:
    """Label background components that do not touch the grid border."""
    bg = vox == 0
    comps, n = ndimage.label(bg, structure=SIX_CONNECTED)
    border = np.zeros(n + 1, dtype=bool)
    for axis in range(3):
        for face in (0, -1):
            border[np.unique(np.take(comps, face, axis=axis))] = True
    return comps, n, border


def _fill_holes_array(vox: np.ndarray, label: int) -> np.ndarray:
    comps, n, border = _enclosed_background(vox)
    if n == 0 or border[1:].all():
        return vox
    out = vox.copy()
    for k, box in enumerate(ndimage.find_objects(comps), start=1):
        if border[k] or box is None:
            continue
        # interior components never touch a face, so growing the box by one stays in-grid
        box = tuple(slice(s.start - 1, s.stop + 1) for s in box)
        hole = comps[box] == k
        shell = ndimage.binary_dilation(hole, structure=SIX_CONNECTED) & ~hole
        if np.all(vox[box][shell] == label):
            out[box][hole] = label
    return out


def largest_component(lab: LabelMap, label: int) -> LabelMap:
    """Relabel every voxel of ``label`` outside its largest component to background.

    Equal-sized components are resolved in favour of the one containing the
    lexicographically smallest ``(x, y, z)`` voxel.
    """
    label = check_label_in_range(label, lab.num_classes, allow_background=False)
    return lab.with_voxels(_largest_component_array(lab.voxels, label))


def fill_holes(lab: LabelMap, label: int) -> LabelMap:
    """Fill background cavities whose whole 6-neighbour shell belongs to ``label``.

    A cavity is a 6-connected background region that cannot reach the grid
    border through background. Cavities bordered by more than one label are
    left alone.
    """
    label = check_label_in_range(label, lab.num_classes, allow_background=False)
    return lab.with_voxels(_fill_holes_array(lab.voxels, label))


def postprocess_all(lab: LabelMap) -> LabelMap:
    """Largest-component filtering for every foreground label, then hole filling.

    Both passes run in ascending label order. Filtering every label before any
    filling keeps the result idempotent: a satellite removed late cannot open a
    cavity inside a label that was already filled.
    """
    vox = lab.voxels
    for label in range(1, lab.num_classes):
        vox = _largest_component_array(vox, label)
    for label in range(1, lab.num_classes):
        vox = _fill_holes_array(vox, label)
    if vox is lab.voxels:
        return lab
    return lab.with_voxels(vox)
