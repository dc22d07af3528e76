"""
Tests de la configuración JSON estricta
"""

import json
from pathlib import Path

import pytest

from src.config import FORTE1_R1Q, RunConfig, TrainConfig, describe
from src.exceptions import ConfigurationError


class TestDefaults:

    def test_hyperparameter_defaults(self):
        config = RunConfig()
        assert (config.train.lr, config.train.batch_size, config.train.epochs) == (1e-4, 64, 100)
        assert (config.train.step_size, config.train.gamma) == (10, 0.75)
        assert (config.model.n_qubits, config.model.reps) == (6, 4)
        assert config.backend.r_1q == FORTE1_R1Q
        assert config.data.synth is not None and config.data.manifest is None

    def test_json_form_round_trips(self):
        config = RunConfig.from_dict({'train': {'epochs': 3}, 'grid': {'qubits': [3, 4]}})
        assert RunConfig.from_dict(json.loads(config.to_json())) == config


class TestStrictParsing:

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigurationError, match='optimizer'):
            RunConfig.from_dict({'optimizer': 'sgd'})

    def test_unknown_nested_key_reports_dotted_path(self):
        with pytest.raises(ConfigurationError, match=r'train\.momentum'):
            RunConfig.from_dict({'train': {'momentum': 0.9}})

    def test_unknown_synth_key(self):
        with pytest.raises(ConfigurationError, match=r'data\.synth\.noise'):
            RunConfig.from_dict({'data': {'synth': {'noise': 1}}})

    def test_manifest_and_synth_conflict(self):
        with pytest.raises(ConfigurationError):
            RunConfig.from_dict({'data': {'manifest': 'm.csv', 'synth': {}}})

    def test_section_must_be_an_object(self):
        with pytest.raises(ConfigurationError):
            RunConfig.from_dict({'train': [1, 2]})

    @pytest.mark.parametrize('payload', [
        {'model': {'n_qubits': 11}},
        {'model': {'reps': 1}},
        {'model': {'kind': 'svm'}},
        {'backend': {'kind': 'hardware'}},
        {'backend': {'r_2q': 1.5}},
        {'train': {'batch_size': 0}},
        {'train': {'gamma': 0.0}},
        {'train': {'loss': 'mse'}},
        {'grid': {'qubits': [5, 3]}},
        {'test_fraction': 1.0},
        {'baseline_epochs': 0},
    ])
    def test_out_of_range_values(self, payload):
        with pytest.raises(ConfigurationError):
            RunConfig.from_dict(payload)

    def test_gamma_reading_is_validated(self):
        with pytest.raises(ConfigurationError):
            TrainConfig(gamma_reading='both')


class TestFiles:

    def test_from_file(self, tmp_path):
        path = tmp_path / 'cfg.json'
        path.write_text(json.dumps({'seed': 5, 'data': {'manifest': 'data/manifest.csv'}}))
        config = RunConfig.from_file(path)
        assert config.seed == 5
        assert config.data.manifest == 'data/manifest.csv' and config.data.synth is None

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            RunConfig.from_file(tmp_path / 'nope.json')

    def test_invalid_json(self, tmp_path):
        path = tmp_path / 'bad.json'
        path.write_text('{"train": ')
        with pytest.raises(ConfigurationError):
            RunConfig.from_file(path)


class TestOutputDir:

    def test_precedence(self, monkeypatch):
        monkeypatch.setenv('QTL_OUTPUT_DIR', '/env/out')
        config = RunConfig(output_dir='/config/out')
        assert config.resolve_output_dir('/flag/out') == Path('/flag/out')
        assert config.resolve_output_dir() == Path('/config/out')
        assert RunConfig().resolve_output_dir() == Path('/env/out')

    def test_default(self, monkeypatch):
        monkeypatch.delenv('QTL_OUTPUT_DIR', raising=False)
        assert RunConfig().resolve_output_dir() == Path('./outputs')


class TestDescribe:

    def test_shows_resolved_settings(self, monkeypatch):
        monkeypatch.delenv('QTL_OUTPUT_DIR', raising=False)
        config = RunConfig.from_dict({'train': {'epochs': 7}})
        text = describe(config)
        assert 'OUTPUT_DIR: outputs' in text
        assert json.loads(text[text.index('{'):])['train']['epochs'] == 7

    def test_override_wins(self):
        assert 'OUTPUT_DIR: /flag/out' in describe(RunConfig(output_dir='/config/out'), '/flag/out')
