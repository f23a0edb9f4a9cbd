import pickle
import unittest

import numpy as np

from noisy_cbo.randomness import DIFFUSION, ORACLE, SeedSpec, run_seed


class SeedSpecTests(unittest.TestCase):
    def test_same_key_same_numbers(self) -> None:
        first = SeedSpec(3, (1, ORACLE, 4)).generator().random(5)
        second = SeedSpec(3, (1, ORACLE, 4)).generator().random(5)

        np.testing.assert_array_equal(first, second)

    def test_streams_are_distinct(self) -> None:
        base = run_seed(3, 1)

        draws = {
            key: base.child(*key).generator().random()
            for key in [(ORACLE, 0), (ORACLE, 1), (DIFFUSION, 0)]
        }

        self.assertEqual(3, len(set(draws.values())))
        self.assertNotEqual(
            SeedSpec(3).generator().random(), SeedSpec(4).generator().random()
        )

    def test_child_extends_the_stream_id(self) -> None:
        self.assertEqual(SeedSpec(5, (2, ORACLE, 7)), run_seed(5, 2).child(ORACLE, 7))

    def test_draws_do_not_depend_on_call_order(self) -> None:
        seed = run_seed(11, 0)

        late = seed.child(DIFFUSION, 9).generator().normal()
        seed.child(ORACLE, 9).generator().normal(size=100)
        again = seed.child(DIFFUSION, 9).generator().normal()

        self.assertEqual(late, again)

    def test_survives_pickling(self) -> None:
        seed = SeedSpec(2**63, (0, 1))
        restored = pickle.loads(pickle.dumps(seed))

        self.assertEqual(seed.generator().random(), restored.generator().random())

    def test_rejects_out_of_range_keys(self) -> None:
        with self.assertRaises(ValueError):
            SeedSpec(-1)
        with self.assertRaises(ValueError):
            SeedSpec(2**64)
        with self.assertRaises(ValueError):
            SeedSpec(0, (1, -2))


if __name__ == "__main__":
    unittest.main()
