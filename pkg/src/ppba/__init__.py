"""Query-efficient black-box adversarial attack toolkit.

Low-frequency DCT sensing operator, probability-driven random-walk
attacks over quantized steps, baselines (projected NES, SimBA-style,
white-box BIM), toy victims, an HTTP victim client, and a metrics
harness with a CLI.
"""

from .attack import (
    AttackConfig,
    AttackRecord,
    ConfusionTables,
    clip_to_image,
    cw_loss,
    ppba_attack,
    prba_attack,
    project_l2,
    project_linf,
    sample_step,
    step_probabilities,
    topk_suppression_loss,
    update_confusion,
)
from .baselines import BimConfig, NesConfig, bim_whitebox, nes_projected_attack, simba_attack
from .metrics import MetricsSummary, compute_metrics, step_effective_rate
from .projection import (
    FrequencyIndex,
    SensingOperator,
    TensorShape,
    dct2_forward,
    dct2_inverse,
    zigzag_selection,
)
from .victims import (
    CountingVictim,
    HttpVictim,
    QueryCounter,
    ToyVictim,
    ToyVictimSpec,
    VictimError,
    generate_toy_victim,
    http_predict,
    load_victim,
    save_victim,
    toy_gradient,
    toy_predict,
)

__version__ = "0.1.0"
