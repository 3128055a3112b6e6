"""Speech-to-punctuated-text recognition on synthetic data: CTC losses and
decoders, a numpy Transformer encoder with two CTC heads (final head on
punctuated labels, intermediate head on unpunctuated labels), a cascaded
ASR + punctuation-classifier baseline, and alignment-based evaluation.
"""

from .vocab import Vocab, VocabView, build_vocab
from .corpus import (
    CorpusConfig,
    TranscriptPair,
    apply_punct_classes,
    derive_punct_classes,
    generate_corpus,
    strip_punctuation,
)
from .features import SynthConfig, mask_augment, synthesize, word_prototypes
from .ctc import (
    brute_force_ctc,
    collapse,
    ctc_grad,
    ctc_loss,
    greedy_decode,
    prefix_beam_decode,
)
from .model import ModelConfig, count_params, forward, backward, init_params
from .training import (
    PLANS,
    AdamConfig,
    AdamState,
    LabelPlan,
    LossWeights,
    TrainConfig,
    adam_step,
    total_loss,
    train,
)
from .cascade import ClassifierConfig, cascade_infer, ce_loss, train_classifier
from .evaluation import EvalReport, align, evaluate_system, punct_counts, wer
from .pipeline import DataBundle, ExperimentConfig, build_dataset, run_ablation

__version__ = "0.1.0"
