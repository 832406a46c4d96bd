"""Tiny task and model shared by the training, stage and acceptance tests."""

from fmadapt.bestrq import QuantizerConfig
from fmadapt.corpus import SyntheticTaskSpec, load_features
from fmadapt.decoders import DecoderConfig
from fmadapt.encoder import EncoderConfig
from fmadapt.frontend import fit_normalization
from fmadapt.model import Model, ModelSpec
from fmadapt.vocab import Vocabulary

TOY_TASK = SyntheticTaskSpec(letters="abc", min_token_frames=3, max_token_frames=4, min_words=1, max_words=2,
                             max_word_len=2, seed=5)
TOY_VOCAB = Vocabulary(list(TOY_TASK.tokens))


def toy_spec(kind="rnnt", quantizer=True):
    return ModelSpec(
        encoder=EncoderConfig(n_blocks=1, model_dim=8, n_heads=2, subsample_channels=2, output_dim=8, adapter_dim=2),
        decoder=DecoderConfig(kind, cell_dim=4, hidden_dim=6, joint_dim=6, att_dim=4) if kind else None,
        vocab_size=TOY_VOCAB.size,
        quantizer=QuantizerConfig(8, 4) if quantizer else None,
        pretrain_head=quantizer,
    )


def toy_model(manifest, seed=0, kind="rnnt", quantizer=True):
    m = Model.init(toy_spec(kind, quantizer), seed, TOY_VOCAB)
    m.set_norm_stats(fit_normalization(load_features(r, manifest.base_dir) for r in manifest.records))
    return m
