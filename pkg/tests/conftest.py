import numpy as np
import pytest

from kwasr.lexicon import build_lexicon
from kwasr.text import Tokenizer


@pytest.fixture(scope="session")
def tokenizer() -> Tokenizer:
    return Tokenizer()


@pytest.fixture(scope="session")
def toy_lexicon():
    return build_lexicon(n_words=20, homonym_group_count=4, code_len=4,
                         alphabet_size=12, seed=3)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(0)
