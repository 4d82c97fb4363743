import numpy as np
from sklearn.utils.validation import check_array, check_consistent_length, column_or_1d


def check_features(X, n_features=None):
    X = check_array(X, dtype=np.float64, order="C")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"X has {X.shape[1]} features, expected {n_features}")
    return X


def check_transition_arrays(X, X_next, *columns):
    """Validate paired feature rows and per-step scalar columns.

    ``X``/``X_next`` may both be None for learners without features.
    """
    cols = [np.ascontiguousarray(column_or_1d(c, dtype=np.float64)) for c in columns]
    for c in cols:
        if not np.all(np.isfinite(c)):
            raise ValueError("transition columns must be finite")
    if X is None:
        check_consistent_length(*cols)
        return None, None, cols
    X = check_features(X)
    X_next = check_features(X_next, X.shape[1])
    check_consistent_length(X, X_next, *cols)
    return X, X_next, cols
