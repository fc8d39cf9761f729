import numpy as np
import pytest

from labelpool import ClassId, LabelVector, Modality, Pool


def cid(i, namespace="test"):
    return ClassId(namespace, i)


def mean_vector(values, i, namespace="test", domain=None, count=1):
    return LabelVector(
        vector=np.asarray(values, dtype=np.float64),
        class_id=cid(i, namespace),
        modality=Modality.IMAGE_MEAN,
        domain_id=domain,
        sample_count=count,
    )


def single_entry_pool(vectors, namespace="test", modality=Modality.IMAGE_MEAN):
    """Pool with one entry per class; vectors is a (K, D) array-like."""
    vectors = np.asarray(vectors, dtype=np.float64)
    entries = {}
    for i, row in enumerate(vectors):
        c = cid(i, namespace)
        count = 0 if modality is Modality.TEXT else 1
        entries[c] = [LabelVector(vector=row, class_id=c, modality=modality, sample_count=count)]
    return Pool(vectors.shape[1], entries)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))
