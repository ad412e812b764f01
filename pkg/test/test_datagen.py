import os
import sys
import tempfile
import unittest

import numpy

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from groupdro import datagen
from groupdro import error
from groupdro import problem


class TestSynthetic(unittest.TestCase):
    def test_deterministic_per_seed(self):
        spec = datagen.SynthSpec(kind='gdro', m=4, dim=8, n_per_group=16, seed=7)
        a = datagen.gen_gdro(spec)
        self.assertEqual(a, datagen.generate(spec))
        self.assertEqual((a.m, a.dim, a.n.tolist()), (4, 8, [16] * 4))
        other = datagen.gen_gdro(datagen.SynthSpec(
            kind='gdro', m=4, dim=8, n_per_group=16, seed=8))
        self.assertNotEqual(a, other)

    def test_groups_do_not_depend_on_the_group_count(self):
        small = datagen.gen_gdro(datagen.SynthSpec(
            kind='gdro', m=2, dim=3, n_per_group=5, seed=1))
        large = datagen.gen_gdro(datagen.SynthSpec(
            kind='gdro', m=3, dim=3, n_per_group=5, seed=1))
        self.assertEqual(large.subset([0, 1]), small)

    def test_held_out_set(self):
        spec = datagen.SynthSpec(
            kind='mero', m=3, dim=4, n_per_group=6, seed=2, test_n=[1, 2, 3])
        train, test = datagen.gen_mero(spec, with_test=True)
        self.assertEqual(train, datagen.gen_mero(spec))
        self.assertEqual(test.n.tolist(), [1, 2, 3])

    def test_mero_flip_probabilities(self):
        flips = datagen.SynthSpec(kind='mero', m=72).flip_probabilities()
        numpy.testing.assert_allclose(flips[:2], [0.05, 0.05 + 1 / 160])
        self.assertLess(flips.max(), 0.5)
        with self.assertRaises(error.NoiseModelError):
            datagen.SynthSpec(kind='mero', m=73).flip_probabilities()

    def test_kind_mismatch(self):
        with self.assertRaises(ValueError):
            datagen.gen_mero(datagen.SynthSpec(kind='gdro', m=2))
        with self.assertRaises(ValueError):
            datagen.SynthSpec(kind='other')
        with self.assertRaises(ValueError):
            datagen.SynthSpec(kind='gdro', flip_prob=1.5)

    def test_labels(self):
        rng = problem.make_rng(0)
        features = numpy.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
        direction = numpy.array([1.0, 0.0])
        clean = datagen.noisy_labels(rng, features, direction, 0.0)
        self.assertEqual(clean.tolist(), [1, -1, 1])
        flipped = datagen.noisy_labels(rng, features, direction, 1.0)
        self.assertEqual(flipped.tolist(), [-1, 1, -1])

    def test_unit_direction(self):
        w = datagen.unit_direction(problem.make_rng(3), 16)
        self.assertAlmostEqual(float(numpy.linalg.norm(w)), 1.0)

    def test_empirical_noise_rate(self):
        ds = datagen.gen_gdro(datagen.SynthSpec(
            kind='gdro', m=1, dim=3, n_per_group=4000, seed=5, flip_prob=0.2))
        features, labels = ds.group(0)
        # the hidden direction is the same draw gen_gdro makes
        direction = datagen.unit_direction(problem.make_rng(5, 0, 0), 3)
        clean = numpy.where(features @ direction >= 0, 1, -1)
        self.assertAlmostEqual(float((labels != clean).mean()), 0.2, delta=0.03)


class TestFileFormats(unittest.TestCase):
    def setUp(self):
        self.tmpdir = tempfile.TemporaryDirectory(prefix='groupdro-test-')
        self.ds = datagen.gen_gdro(datagen.SynthSpec(
            kind='gdro', m=3, dim=2, n_per_group=[1, 2, 3], seed=4))

    def tearDown(self):
        self.tmpdir.cleanup()

    def path(self, name):
        return os.path.join(self.tmpdir.name, name)

    def write(self, name, text):
        with open(self.path(name), 'w') as f:
            f.write(text)
        return self.path(name)

    def test_both_formats_load_the_same_dataset(self):
        for format in datagen.FORMATS:
            path = self.path('d.' + format)
            size = datagen.save_dataset(self.ds, path, format=format)
            self.assertEqual(size, os.path.getsize(path))
            self.assertEqual(datagen.load_dataset(path), self.ds)

    def test_multiclass_labels(self):
        ds = problem.GroupedDataset.from_groups(
            [([[0.5]], [2]), ([[1.5], [2.5]], [0, 1])],
            label_kind='multiclass')
        for format in datagen.FORMATS:
            path = self.path('mc.' + format)
            datagen.save_dataset(ds, path, format=format)
            loaded = datagen.load_dataset(path)
            self.assertEqual(loaded.label_kind, 'multiclass')
            self.assertEqual(loaded, ds)

    def test_text_layout(self):
        path = self.path('d.gdro')
        datagen.save_dataset(self.ds, path)
        with open(path) as f:
            lines = f.read().splitlines()
        self.assertEqual(lines[0], 'gdro v1 3 2 binary')
        self.assertEqual(lines[1], 'group 0 1')
        self.assertEqual(len(lines), 1 + 3 + 6)

    def test_missing_file(self):
        with self.assertRaises(error.NoDatasetFile):
            datagen.load_dataset(self.path('missing.gdro'))

    def test_malformed_header(self):
        path = self.write('bad.gdro', 'gdro v2 1 1 binary\ngroup 0 1\n1 0.0\n')
        with self.assertRaises(error.MalformedHeader):
            datagen.load_dataset(path)

    def test_truncated_text(self):
        path = self.write(
            'short.gdro', 'gdro v1 2 1 binary\ngroup 0 2\n1 0.5\n-1 0.25\n'
            'group 1 2\n1 1.0\n')
        with self.assertRaises(error.TruncatedDataset) as cm:
            datagen.load_dataset(path)
        self.assertEqual(cm.exception.group, 1)
        path = self.write(
            'missing-group.gdro', 'gdro v1 2 1 binary\ngroup 0 1\n1 0.5\n')
        with self.assertRaises(error.TruncatedDataset):
            datagen.load_dataset(path)

    def test_group_count_mismatch(self):
        path = self.write(
            'mismatch.gdro', 'gdro v1 2 1 binary\ngroup 0 2\n1 0.5\n'
            'group 1 1\n1 1.0\n')
        with self.assertRaises(error.GroupCountMismatch) as cm:
            datagen.load_dataset(path)
        self.assertEqual((cm.exception.expected, cm.exception.found), (2, 1))

    def test_bad_sample_line(self):
        path = self.write(
            'nan.gdro', 'gdro v1 1 2 binary\ngroup 0 1\n1 0.5\n')
        with self.assertRaises(error.DatasetError) as cm:
            datagen.load_dataset(path)
        self.assertIn(':3:', str(cm.exception))

    def test_truncated_binary(self):
        path = self.path('d.bin')
        datagen.save_dataset(self.ds, path, format='binary')
        with open(path, 'rb') as f:
            data = f.read()
        with open(path, 'wb') as f:
            f.write(data[:-8])
        with self.assertRaises(error.TruncatedDataset):
            datagen.load_dataset(path)
        with open(path, 'wb') as f:
            f.write(data + b'\0')
        with self.assertRaises(error.DatasetError):
            datagen.load_dataset(path)


if __name__ == '__main__':
    unittest.main()
