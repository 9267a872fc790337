"""distillab: compress a transformer tagger into a BiLSTM student.

The package trains a small transformer teacher on labeled tagged
sentences, records its logits and internal representations over a large
unlabeled transfer set, and distils a compact student through staged
optimization with gradual unfreezing. Sklearn-style estimators in
:mod:`distillab.estimators` are the main Python API; the ``distillab``
command line drives file-based experiment pipelines.
"""

__version__ = "0.1.0"

_LAZY = {
    "TeacherTagger": "distillab.estimators",
    "DistilledTagger": "distillab.estimators",
    "SvdEmbeddingReducer": "distillab.estimators",
}


def __getattr__(name):
    # estimators pull in scikit-learn; defer that import until first use
    if name in _LAZY:
        import importlib

        module = importlib.import_module(_LAZY[name])
        return getattr(module, name)
    raise AttributeError(f"module 'distillab' has no attribute '{name}'")
