"""Synthetic frozen embedding space and the embedding store format."""

import numpy as np
import numpy.testing as npt
import pytest

from tacalign.contact import pose_for_depth
from tacalign.embedding import (
    build_codebook,
    embed_image_synthetic,
    embed_text_synthetic,
    load_embedding_store,
    save_embedding_store,
)
from tacalign.errors import DescriptionParseError, FormatError, NoContactError
from tacalign.labeling import (
    DIMENSIONS,
    VOCABULARIES,
    Categories,
    generate_description,
    generate_prompt,
)
from tacalign.sensor import SensorSpec, compute_displacement_field, render_depth_image
from tacalign.shapes import Primitive

IDENTITY = np.array([0.0, 0.0, 0.0, 1.0])


@pytest.fixture(scope="module")
def codebook():
    return build_codebook(64)


class TestCodebook:
    def test_bit_identical_regeneration(self, codebook):
        again = build_codebook(64)
        for dim in DIMENSIONS:
            npt.assert_array_equal(codebook.vectors[dim], again.vectors[dim])
        npt.assert_array_equal(codebook.projection, again.projection)

    def test_class_vector_separation(self, codebook):
        for dim in DIMENSIONS:
            vecs = codebook.vectors[dim]
            sims = vecs @ vecs.T
            off_diag = sims[~np.eye(len(vecs), dtype=bool)]
            assert np.all(off_diag < 0.5)

    def test_projection_orthonormal_columns(self, codebook):
        gram = codebook.projection.T @ codebook.projection
        npt.assert_allclose(gram, np.eye(gram.shape[0]), atol=1e-12)


class TestTextEmbedding:
    def test_deterministic(self, codebook):
        text = "This is a sphere"
        a = embed_text_synthetic(text, codebook)
        b = embed_text_synthetic(text, codebook)
        npt.assert_array_equal(a, b)

    def test_unit_norm(self, codebook):
        cats = Categories("torus", "bumpy", "deep", "top-right", "large")
        v = embed_text_synthetic(generate_description(cats), codebook)
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-6)

    def test_distinct_shapes_separated(self, codebook):
        a = embed_text_synthetic("This is a sphere", codebook)
        b = embed_text_synthetic("This is a cuboid", codebook)
        assert float(a @ b) < 0.5

    def test_matching_prompt_beats_mismatched(self, codebook):
        # over random full states, the description is closer to its own
        # shape prompt than to every other shape prompt (brute force over
        # the vocabulary)
        rng = np.random.default_rng(0)
        prompts = {
            s: embed_text_synthetic(generate_prompt("shape", s), codebook)
            for s in VOCABULARIES["shape"]
        }
        for _ in range(1000):
            cats = Categories(
                shape=VOCABULARIES["shape"][rng.integers(19)],
                texture=VOCABULARIES["texture"][rng.integers(5)],
                depth_cat=VOCABULARIES["depth"][rng.integers(4)],
                position_cat=VOCABULARIES["position"][rng.integers(9)],
                area_cat=VOCABULARIES["area"][rng.integers(5)],
            )
            desc = embed_text_synthetic(generate_description(cats), codebook)
            own = float(desc @ prompts[cats.shape])
            others = [float(desc @ p) for s, p in prompts.items() if s != cats.shape]
            assert own > max(others)

    def test_unparseable_raises(self, codebook):
        with pytest.raises(DescriptionParseError):
            embed_text_synthetic("what a lovely contact", codebook)


def _render(primitive, xy, depth, sensor, w=64, h=48):
    pose = pose_for_depth(primitive, IDENTITY, xy, depth)
    field = compute_displacement_field(primitive, pose, sensor)
    return field, render_depth_image(field, w, h)


class TestImageEmbedding:
    def test_unit_norm_and_determinism(self, codebook, sensor):
        _, img = _render(Primitive("sphere", (5.0,)), (0.0, 0.0), 1.0, sensor)
        a = embed_image_synthetic(img, codebook, sensor)
        b = embed_image_synthetic(img, codebook, sensor)
        npt.assert_array_equal(a, b)
        assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-6)

    def test_zero_image_raises(self, codebook):
        with pytest.raises(NoContactError):
            embed_image_synthetic(np.zeros((48, 64)), codebook)

    def test_matched_description_beats_position_flip(self, codebook, sensor):
        # image vs its own description scores above the same description
        # with the position replaced by the opposite cell
        rng = np.random.default_rng(1)
        wins = 0
        trials = 0
        for _ in range(40):
            x = float(rng.uniform(-6.5, 6.5))
            y = float(rng.uniform(-4.5, 4.5))
            depth = float(rng.uniform(0.5, 2.8))
            prim = Primitive("sphere", (float(rng.uniform(3.0, 6.0)),))
            field, img = _render(prim, (x, y), depth, sensor)
            from tacalign.labeling import compute_contact_state

            state = compute_contact_state(field, prim, sensor)
            own = generate_description(state)
            cats = state.categories()
            opposite = {
                "top-left": "bottom-right", "top-center": "bottom-center",
                "top-right": "bottom-left", "middle-left": "middle-right",
                "center": "top-left", "middle-right": "middle-left",
                "bottom-left": "top-right", "bottom-center": "top-center",
                "bottom-right": "top-left",
            }[cats.position_cat]
            flipped = Categories(
                cats.shape, cats.texture, cats.depth_cat, opposite, cats.area_cat
            )
            img_vec = embed_image_synthetic(img, codebook, sensor)
            own_cos = float(img_vec @ embed_text_synthetic(own, codebook))
            flip_cos = float(
                img_vec @ embed_text_synthetic(generate_description(flipped), codebook)
            )
            trials += 1
            wins += own_cos > flip_cos
        assert wins == trials

    def test_resampling_stability(self, codebook, sensor):
        # two renders of the same field at different resolutions embed
        # almost identically
        field, img_low = _render(Primitive("sphere", (5.0,)), (0.0, 0.0), 1.5, sensor)
        img_high = render_depth_image(field, 128, 96)
        a = embed_image_synthetic(img_low, codebook, sensor)
        b = embed_image_synthetic(img_high, codebook, sensor)
        assert float(a @ b) > 0.98

    def test_pre_alignment_gap(self, codebook, sensor):
        # matched (description, image) pairs out-score mismatched pairs by
        # at least 0.2 mean cosine over 1000 pairings
        rng = np.random.default_rng(2)
        texts, images = [], []
        from tacalign.labeling import compute_contact_state

        params_by_kind = {
            "sphere": (5.0,),
            "cuboid": (3.0, 4.5, 2.0),
            "cylinder": (3.0, 4.0),
            "torus": (4.5, 1.5),
        }
        kinds = tuple(params_by_kind)
        while len(texts) < 50:
            kind = kinds[rng.integers(len(kinds))]
            prim = Primitive(kind, params_by_kind[kind])
            x = float(rng.uniform(-6, 6))
            y = float(rng.uniform(-4, 4))
            depth = float(rng.uniform(0.4, 3.0))
            try:
                field, img = _render(prim, (x, y), depth, sensor)
                state = compute_contact_state(field, prim, sensor)
            except NoContactError:
                continue  # press landed too far off-pad to label
            texts.append(
                embed_text_synthetic(generate_description(state), codebook)
            )
            images.append(embed_image_synthetic(img, codebook, sensor))
        texts = np.stack(texts)
        images = np.stack(images)
        matched = float(np.mean(np.sum(texts * images, axis=1)))
        rng2 = np.random.default_rng(3)
        mismatched = []
        for _ in range(1000):
            i, j = rng2.integers(50), rng2.integers(50)
            if i != j:
                mismatched.append(float(texts[i] @ images[j]))
        assert matched - float(np.mean(mismatched)) >= 0.2


class TestEmbeddingStore:
    def test_round_trip_bit_identical_payloads(self, tmp_path):
        rng = np.random.default_rng(0)
        vectors = {}
        for i in range(100):
            v = rng.normal(size=32)
            vectors[f"id{i:03d}"] = v / np.linalg.norm(v)
        path = tmp_path / "store.tcle"
        save_embedding_store(path, vectors)
        loaded = load_embedding_store(path)
        assert len(loaded) == 100
        save_embedding_store(tmp_path / "again.tcle", loaded.vectors)
        assert (tmp_path / "store.tcle").read_bytes() == (
            tmp_path / "again.tcle"
        ).read_bytes()

    def test_unit_vector_unchanged(self, tmp_path):
        v = np.zeros(16)
        v[3] = 1.0
        path = tmp_path / "one.tcle"
        save_embedding_store(path, {"a": v})
        npt.assert_array_equal(load_embedding_store(path).lookup("a"), v)

    def test_renormalisation_with_warning(self, tmp_path):
        v = np.zeros(16)
        v[0] = 0.5
        path = tmp_path / "half.tcle"
        save_embedding_store(path, {"a": v})
        with pytest.warns(UserWarning, match="renormalising"):
            loaded = load_embedding_store(path)
        assert np.linalg.norm(loaded.lookup("a")) == pytest.approx(1.0, abs=1e-6)

    def test_missing_id_raises(self, tmp_path):
        v = np.zeros(8)
        v[0] = 1.0
        path = tmp_path / "s.tcle"
        save_embedding_store(path, {"a": v})
        with pytest.raises(KeyError):
            load_embedding_store(path).lookup("b")

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.tcle"
        path.write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(FormatError):
            load_embedding_store(path)

    def test_truncation_rejected(self, tmp_path):
        v = np.zeros(8)
        v[0] = 1.0
        path = tmp_path / "t.tcle"
        save_embedding_store(path, {"abc": v})
        data = path.read_bytes()
        path.write_bytes(data[:-5])
        with pytest.raises(FormatError):
            load_embedding_store(path)
