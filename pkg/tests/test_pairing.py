import numpy as np
import pytest

from cellmorph import Channel, DimensionMismatchError, label_components, pair_subjects
from conftest import make_mask, random_blob_mask
from oracles import overlap_counts


def _pair_masks(cells, nuclei, pitch=1.0):
    return (make_mask(cells, Channel.CYTOPLASM, pitch),
            make_mask(nuclei, Channel.NUCLEI, pitch))


class TestPairSubjects:
    def test_concentric_squares_ratio(self):
        cells = np.zeros((30, 30), dtype=np.int32)
        cells[4:24, 4:24] = 1  # 20x20
        nuclei = np.zeros((30, 30), dtype=np.int32)
        nuclei[9:19, 9:19] = 1  # 10x10
        result = pair_subjects(*_pair_masks(cells, nuclei))
        assert len(result.pairs) == 1
        pair = result.pairs[0]
        assert pair.ratio == pytest.approx(4.0, rel=1e-12)
        assert pair.overlap_px == 100
        assert not pair.multi_nucleate
        assert result.unpaired_nuclei == ()
        assert result.unpaired_cells == ()

    def test_nucleus_on_background_unpaired(self):
        cells = np.zeros((10, 10), dtype=np.int32)
        cells[0:3, 0:3] = 1
        nuclei = np.zeros((10, 10), dtype=np.int32)
        nuclei[6:9, 6:9] = 1
        result = pair_subjects(*_pair_masks(cells, nuclei))
        assert result.pairs == ()
        assert result.unpaired_nuclei == (1,)
        assert result.unpaired_cells == (1,)

    def test_two_nuclei_in_one_cell_both_flagged(self):
        cells = np.zeros((10, 20), dtype=np.int32)
        cells[1:9, 1:19] = 7
        nuclei = np.zeros((10, 20), dtype=np.int32)
        nuclei[3:6, 3:6] = 1
        nuclei[3:6, 12:15] = 2
        result = pair_subjects(*_pair_masks(cells, nuclei))
        assert len(result.pairs) == 2
        assert all(p.multi_nucleate for p in result.pairs)
        assert all(p.cell_label == 7 for p in result.pairs)
        # full cytoplasm area attributed to each pair
        assert result.pairs[0].cell_area_um2 == result.pairs[1].cell_area_um2

    def test_maximal_overlap_wins(self):
        cells = np.zeros((6, 10), dtype=np.int32)
        cells[:, 0:4] = 1
        cells[:, 4:10] = 2
        nuclei = np.zeros((6, 10), dtype=np.int32)
        nuclei[2:4, 2:7] = 1  # 2 px in cell 1, 3 px in cell 2 per row
        result = pair_subjects(*_pair_masks(cells, nuclei))
        assert result.pairs[0].cell_label == 2
        assert result.pairs[0].overlap_px == 6

    def test_tie_breaks_to_smaller_cell_label(self):
        cells = np.zeros((6, 10), dtype=np.int32)
        cells[:, 0:4] = 5
        cells[:, 4:8] = 3
        nuclei = np.zeros((6, 10), dtype=np.int32)
        nuclei[2:4, 2:6] = 1  # 4 px in each cell
        result = pair_subjects(*_pair_masks(cells, nuclei))
        assert result.pairs[0].cell_label == 3

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            pair_subjects(make_mask(np.ones((3, 3))), make_mask(np.ones((4, 4))))

    def test_ratio_consistent_with_areas(self):
        cells = np.zeros((12, 12), dtype=np.int32)
        cells[1:11, 1:11] = 2
        nuclei = np.zeros((12, 12), dtype=np.int32)
        nuclei[4:7, 4:8] = 9
        result = pair_subjects(*_pair_masks(cells, nuclei, pitch=0.625))
        pair = result.pairs[0]
        assert pair.ratio == pytest.approx(pair.cell_area_um2 / pair.nucleus_area_um2,
                                           rel=1e-12)
        assert pair.cell_area_um2 == pytest.approx(100 * 0.390625)


class TestPairingProperties:
    def test_partition_of_nuclei(self, rng):
        for _ in range(25):
            cells = label_components(random_blob_mask(rng, 48, 48))
            nuclei = label_components(random_blob_mask(rng, 48, 48))
            result = pair_subjects(*_pair_masks(cells, nuclei))
            paired = {p.nucleus_label for p in result.pairs}
            assert paired.isdisjoint(result.unpaired_nuclei)
            all_nuclei = {int(v) for v in np.unique(nuclei) if v > 0}
            assert paired | set(result.unpaired_nuclei) == all_nuclei
            assert len(result.pairs) == len(paired)

    def test_overlap_matches_pixel_oracle(self, rng):
        for _ in range(15):
            cells = label_components(random_blob_mask(rng, 40, 40))
            nuclei = label_components(random_blob_mask(rng, 40, 40))
            result = pair_subjects(*_pair_masks(cells, nuclei))
            oracle = overlap_counts(cells, nuclei)
            for pair in result.pairs:
                assert oracle[(pair.nucleus_label, pair.cell_label)] == pair.overlap_px
                # assigned cell maximizes overlap, smaller label on ties
                candidates = {c: n for (nv, c), n in oracle.items()
                              if nv == pair.nucleus_label}
                best = max(candidates.values())
                winners = sorted(c for c, n in candidates.items() if n == best)
                assert pair.cell_label == winners[0]
                assert pair.overlap_px == best

    def test_relabel_permutation_invariance(self, rng):
        cells = label_components(random_blob_mask(rng, 40, 40))
        nuclei = label_components(random_blob_mask(rng, 40, 40))
        n_cells = int(cells.max())
        perm = rng.permutation(n_cells) + 1
        remap = np.zeros(n_cells + 1, dtype=np.int32)
        remap[1:] = perm
        shuffled = remap[cells]
        base = pair_subjects(*_pair_masks(cells, nuclei))
        relabeled = pair_subjects(*_pair_masks(shuffled, nuclei))
        # geometric matching is permutation-invariant except for documented
        # smaller-label tie-breaks; compare only nuclei with a unique argmax
        oracle = overlap_counts(cells, nuclei)
        unambiguous = set()
        for nucleus in {nv for nv, _ in oracle}:
            overlaps = sorted((n for (nv, _), n in oracle.items() if nv == nucleus),
                              reverse=True)
            if len(overlaps) == 1 or overlaps[0] > overlaps[1]:
                unambiguous.add(nucleus)
        base_pairs = {(p.nucleus_label, int(remap[p.cell_label]), p.overlap_px)
                      for p in base.pairs if p.nucleus_label in unambiguous}
        new_pairs = {(p.nucleus_label, p.cell_label, p.overlap_px)
                     for p in relabeled.pairs if p.nucleus_label in unambiguous}
        assert base_pairs == new_pairs
