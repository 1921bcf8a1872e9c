import numpy as np
import pytest

from tokenpack.tokens import TokenMessage

# Mixed content/function words so random messages carry repeated tokens,
# which is what makes packet grouping quality vary.
VOCAB = (
    "the a dog cat small tall quickly runs jumps over fence red bike motor "
    "park tree river bird flies under bridge old house garden"
).split()

MOTOR_BIKE = TokenMessage(("a", "small", "motor", "bike"))


def random_message(rng: np.random.Generator, K: int, vocab=VOCAB) -> TokenMessage:
    return TokenMessage(tuple(str(w) for w in rng.choice(vocab, size=K)))


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
