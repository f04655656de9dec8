import json
import statistics
import threading
import urllib.request

import numpy as np
import pytest

from podbench.audio import AudioBuffer, write_wav
from podbench.listening import (
    ConfigError,
    RatingStore,
    RatingValidationError,
    compute_mos,
    create_session,
    load_test_config,
    record_ratings,
)
from podbench.service import serve

CONDITIONS = ("alpha-sep", "beta-sep")


@pytest.fixture(scope="module")
def test_config(tmp_path_factory):
    root = tmp_path_factory.mktemp("listening")
    rng = np.random.default_rng(1)
    excerpts = []
    for i in range(8):
        excerpt_id = f"ex{i}"
        mix_rel = f"audio/{excerpt_id}_mix.wav"
        (root / "audio").mkdir(exist_ok=True)
        write_wav(root / mix_rel, AudioBuffer.mono(0.1 * rng.standard_normal(800), 8000), "float32")
        estimates = {}
        for condition in CONDITIONS:
            rel = f"audio/{excerpt_id}_{condition}.wav"
            write_wav(root / rel, AudioBuffer.mono(0.1 * rng.standard_normal(800), 8000), "float32")
            estimates[condition] = rel
        excerpts.append({"excerpt_id": excerpt_id, "mixture": mix_rel, "estimates": estimates})
    doc = {
        "conditions": list(CONDITIONS),
        "training_excerpt_id": "ex0",
        "source_type": "speech",
        "excerpts": excerpts,
    }
    path = root / "config.json"
    path.write_text(json.dumps(doc))
    return load_test_config(path)


class TestConfigValidation:
    def test_loaded_config_shape(self, test_config):
        assert test_config.conditions == CONDITIONS
        assert len(test_config.excerpts) == 8
        assert len(test_config.scored_excerpts()) == 7
        assert test_config.parts[1] == ("OVRL",)
        assert test_config.parts[2] == ("SIG", "BAK")

    def test_missing_estimate_rejected(self, test_config):
        from dataclasses import replace

        broken = [replace(e, estimates={"alpha-sep": "x.wav"}) for e in test_config.excerpts]
        with pytest.raises(ConfigError, match="lacks estimates"):
            replace(test_config, excerpts=tuple(broken))

    def test_unknown_training_excerpt_rejected(self, test_config):
        from dataclasses import replace

        with pytest.raises(ConfigError):
            replace(test_config, training_excerpt_id="nope")


class TestCreateSession:
    def test_eight_tasks_training_first(self, test_config):
        session = create_session(test_config, part=1, seed=5)
        assert len(session.tasks) == 8
        assert session.tasks[0].excerpt_id == "ex0"
        assert session.tasks[0].training is True
        assert all(not t.training for t in session.tasks[1:])
        assert session.metrics == ("OVRL",)

    def test_part_two_metrics(self, test_config):
        session = create_session(test_config, part=2, seed=5)
        assert session.metrics == ("SIG", "BAK")

    def test_same_seed_same_ordering(self, test_config):
        a = create_session(test_config, 1, 77)
        b = create_session(test_config, 1, 77)
        assert [t.excerpt_id for t in a.tasks] == [t.excerpt_id for t in b.tasks]
        assert [t.stimuli for t in a.tasks] == [t.stimuli for t in b.tasks]
        assert a.session_id != b.session_id

    def test_scored_excerpts_shuffled_by_seed(self, test_config):
        orders = {tuple(t.excerpt_id for t in create_session(test_config, 1, seed).tasks) for seed in range(8)}
        assert len(orders) > 1

    def test_two_stimuli_per_page_plus_mixture(self, test_config):
        session = create_session(test_config, 1, 3)
        doc = session.descriptor()
        for task in doc["tasks"]:
            assert len(task["stimuli"]) == 2
            assert task["mixture_url"].endswith("/mix")

    def test_descriptor_never_names_conditions(self, test_config):
        session = create_session(test_config, 1, 9)
        text = json.dumps(session.descriptor())
        for condition in CONDITIONS:
            assert condition not in text

    def test_anonymization_is_bijective_per_excerpt(self, test_config):
        session = create_session(test_config, 1, 10)
        for task in session.tasks:
            tokens = [sid for sid, _ in task.stimuli]
            conditions = [c for _, c in task.stimuli]
            assert len(set(tokens)) == len(CONDITIONS)
            assert sorted(conditions) == sorted(CONDITIONS)
            for sid, condition in task.stimuli:
                assert session.condition_for(task.excerpt_id, sid) == condition

    def test_unknown_part_rejected(self, test_config):
        with pytest.raises(ConfigError):
            create_session(test_config, 3, 0)


def page_ratings(session, task, value=4):
    return [
        {"stimulus_id": sid, "metric": metric, "value": value}
        for sid, _ in task.stimuli
        for metric in session.metrics
    ]


class TestRecordRatings:
    def test_valid_page_stores_rows(self, test_config, tmp_path):
        store = RatingStore(tmp_path / "r.jsonl")
        session = create_session(test_config, 1, 1)
        task = session.tasks[1]
        stored = record_ratings(store, session, task.excerpt_id, page_ratings(session, task), test_config)
        assert stored == 2
        records = store.load()
        assert {r.condition for r in records} == set(CONDITIONS)
        assert all(r.scored for r in records)

    def test_out_of_range_value_stores_nothing(self, test_config, tmp_path):
        store = RatingStore(tmp_path / "r.jsonl")
        session = create_session(test_config, 1, 2)
        task = session.tasks[1]
        ratings = page_ratings(session, task)
        ratings[0]["value"] = 6
        with pytest.raises(RatingValidationError) as err:
            record_ratings(store, session, task.excerpt_id, ratings, test_config)
        assert err.value.offenders
        assert store.load() == []

    def test_incomplete_page_rejected(self, test_config, tmp_path):
        store = RatingStore(tmp_path / "r.jsonl")
        session = create_session(test_config, 2, 3)
        task = session.tasks[1]
        with pytest.raises(RatingValidationError, match="invalid ratings page"):
            record_ratings(store, session, task.excerpt_id, page_ratings(session, task)[:-1], test_config)

    def test_resubmission_overwrites(self, test_config, tmp_path):
        store = RatingStore(tmp_path / "r.jsonl")
        session = create_session(test_config, 1, 4)
        task = session.tasks[2]
        record_ratings(store, session, task.excerpt_id, page_ratings(session, task, 2), test_config)
        record_ratings(store, session, task.excerpt_id, page_ratings(session, task, 5), test_config)
        effective = store.latest()
        assert len(effective) == 2
        assert all(r.value == 5 for r in effective.values())

    def test_training_page_flagged_unscored(self, test_config, tmp_path):
        store = RatingStore(tmp_path / "r.jsonl")
        session = create_session(test_config, 1, 5)
        training = session.tasks[0]
        record_ratings(store, session, training.excerpt_id, page_ratings(session, training), test_config)
        assert all(not r.scored for r in store.load())


class TestComputeMos:
    def submit(self, store, config, values_by_excerpt, part=1, seed=0):
        session = create_session(config, part, seed)
        for task in session.tasks:
            value = values_by_excerpt.get(task.excerpt_id)
            if value is None:
                continue
            record_ratings(store, session, task.excerpt_id, page_ratings(session, task, value), config)
        return session

    def test_crafted_ratings_hit_table_format(self, test_config, tmp_path):
        # 3x2, 3x3, 14x4, 5x5 -> mean 3.84, population std exactly 0.88
        values = [2] * 3 + [3] * 3 + [4] * 14 + [5] * 5
        store = RatingStore(tmp_path / "r.jsonl")
        for i, value in enumerate(values):
            session = create_session(test_config, 1, 1000 + i)
            task = session.tasks[1]
            record_ratings(store, session, task.excerpt_id, page_ratings(session, task, value), test_config)
        summary = compute_mos(store, test_config)
        group = summary.group("alpha-sep", "OVRL")
        assert group.n == 25
        assert group.formatted() == "3.84±0.88"

    def test_single_rating(self, test_config, tmp_path):
        store = RatingStore(tmp_path / "r.jsonl")
        self.submit(store, test_config, {"ex1": 3})
        group = compute_mos(store, test_config).group("alpha-sep", "OVRL")
        assert group.formatted() == "3.00±0.00"
        assert group.n == 1

    def test_matches_independent_statistics(self, test_config, tmp_path):
        store = RatingStore(tmp_path / "r.jsonl")
        values = [1, 2, 5, 4, 4, 3, 2, 5, 1, 4]
        for i, value in enumerate(values):
            session = create_session(test_config, 1, i)
            task = session.tasks[3]
            record_ratings(store, session, task.excerpt_id, page_ratings(session, task, value), test_config)
        group = compute_mos(store, test_config).group("beta-sep", "OVRL")
        assert abs(group.mean - statistics.fmean(values)) < 1e-12
        assert abs(group.std - statistics.pstdev(values)) < 1e-12

    def test_training_excerpt_excluded(self, test_config, tmp_path):
        store = RatingStore(tmp_path / "r.jsonl")
        self.submit(store, test_config, {"ex1": 4, "ex2": 4})
        before = compute_mos(store, test_config).group("alpha-sep", "OVRL")
        # hammer the training excerpt with minimum scores; MOS must not move
        session = create_session(test_config, 1, 123)
        record_ratings(store, session, "ex0", page_ratings(session, session.tasks[0], 1), test_config)
        after = compute_mos(store, test_config).group("alpha-sep", "OVRL")
        assert before == after

    def test_submission_order_invariance(self, test_config, tmp_path):
        a, b = RatingStore(tmp_path / "a.jsonl"), RatingStore(tmp_path / "b.jsonl")
        session = create_session(test_config, 1, 50)
        tasks = [t for t in session.tasks if not t.training]
        for task in tasks:
            record_ratings(a, session, task.excerpt_id, page_ratings(session, task, 3), test_config)
        for task in reversed(tasks):
            record_ratings(b, session, task.excerpt_id, page_ratings(session, task, 3), test_config)
        assert compute_mos(a, test_config).groups == compute_mos(b, test_config).groups


@pytest.fixture()
def live_server(test_config, tmp_path):
    store = RatingStore(tmp_path / "ratings.jsonl")
    server = serve(test_config, store, port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    host, port = server.server_address[:2]
    yield f"http://{host}:{port}", store
    server.shutdown()
    server.server_close()


def http_get(url):
    with urllib.request.urlopen(url) as response:
        return response.status, json.loads(response.read())


def http_get_raw(url):
    with urllib.request.urlopen(url) as response:
        return response.status, response.read()


def http_post(url, doc):
    req = urllib.request.Request(
        url, data=json.dumps(doc).encode(), headers={"Content-Type": "application/json"}
    )
    try:
        with urllib.request.urlopen(req) as response:
            return response.status, json.loads(response.read())
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read())


class TestHttpService:
    def test_session_audio_ratings_results_flow(self, live_server):
        base, _ = live_server
        status, session = http_get(f"{base}/api/session?part=1&seed=11")
        assert status == 200
        assert len(session["tasks"]) == 8
        assert session["tasks"][0]["training"] is True

        status, wav = http_get_raw(base + session["tasks"][1]["stimuli"][0]["url"])
        assert status == 200 and wav[:4] == b"RIFF"

        for task in session["tasks"]:
            payload = {
                "session_id": session["session_id"],
                "excerpt_id": task["excerpt_id"],
                "ratings": [
                    {"stimulus_id": s["stimulus_id"], "metric": "OVRL", "value": 4}
                    for s in task["stimuli"]
                ],
            }
            status, doc = http_post(f"{base}/api/ratings", payload)
            assert status == 200 and doc["stored"] == 2

        status, results = http_get(f"{base}/api/results")
        assert status == 200
        by_key = {(g["condition"], g["metric"]): g for g in results["groups"]}
        for condition in CONDITIONS:
            group = by_key[(condition, "OVRL")]
            assert group["n"] == 7  # training page excluded
            assert group["mean"] == 4.0

    def test_unknown_session_is_404(self, live_server):
        base, _ = live_server
        status, doc = http_post(
            f"{base}/api/ratings",
            {"session_id": "ghost", "excerpt_id": "ex1", "ratings": []},
        )
        assert status == 404
        assert "ghost" in doc["error"]

    def test_invalid_value_is_422_with_offenders(self, live_server):
        base, _ = live_server
        _, session = http_get(f"{base}/api/session?part=1&seed=3")
        task = session["tasks"][1]
        payload = {
            "session_id": session["session_id"],
            "excerpt_id": task["excerpt_id"],
            "ratings": [
                {"stimulus_id": s["stimulus_id"], "metric": "OVRL", "value": 9}
                for s in task["stimuli"]
            ],
        }
        status, doc = http_post(f"{base}/api/ratings", payload)
        assert status == 422
        assert doc["offenders"]

    def test_unknown_audio_404(self, live_server):
        base, _ = live_server
        with pytest.raises(urllib.error.HTTPError) as err:
            http_get_raw(f"{base}/api/audio/ex1/bogus")
        assert err.value.code == 404

    def test_results_empty_store(self, live_server):
        base, _ = live_server
        status, results = http_get(f"{base}/api/results")
        assert status == 200
        assert results["groups"] == []

    def test_static_dir_serving(self, test_config, tmp_path):
        static = tmp_path / "static"
        static.mkdir()
        (static / "index.html").write_text("<html>rate me</html>")
        store = RatingStore(tmp_path / "r.jsonl")
        server = serve(test_config, store, port=0, static_dir=static)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            host, port = server.server_address[:2]
            status, body = http_get_raw(f"http://{host}:{port}/")
            assert status == 200 and b"rate me" in body
        finally:
            server.shutdown()
            server.server_close()
