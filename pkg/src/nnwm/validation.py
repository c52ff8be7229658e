"""Input checks shared by the estimator wrappers (thin layer over sklearn's)."""

import numpy as np
from sklearn.utils.validation import check_array, column_or_1d

from .exceptions import ShapeError


def check_images(X, image_shape=None):
    """Finite float32 array with a leading sample axis.

    2-D input is reshaped to ``(n, *image_shape)`` when a shape is given;
    otherwise it is passed through (dense layers flatten anyway).
    """
    X = check_array(X, dtype=np.float32, allow_nd=True, ensure_all_finite=True)
    if image_shape is not None:
        image_shape = tuple(image_shape)
        if X.shape[1:] != image_shape:
            if int(np.prod(X.shape[1:])) != int(np.prod(image_shape)):
                raise ShapeError(f"inputs of shape {X.shape[1:]} cannot be viewed as {image_shape}")
            X = X.reshape((len(X),) + image_shape)
    return X


def check_labels(y, k=None):
    y = column_or_1d(y, warn=True)
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise ValueError("labels must be integer class indices")
    y = y.astype(np.int64)
    if y.size and y.min() < 0:
        raise ValueError("labels must be non-negative")
    if k is not None and y.size and y.max() >= k:
        raise ValueError(f"label {y.max()} out of range for {k} classes")
    return y


def check_images_labels(X, y, image_shape=None, k=None):
    X = check_images(X, image_shape)
    y = check_labels(y, k)
    if len(X) != len(y):
        raise ShapeError(f"{len(X)} inputs but {len(y)} labels")
    return X, y
