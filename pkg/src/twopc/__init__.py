"""Two-party secret-sharing runtime with an online-phase profiler.

Insecure by construction: triples come from an in-process dealer and the
RNG is a plain deterministic stream.  Built for measuring online-phase
behavior (compute vs communication, heterogeneous parties), not for
protecting data.
"""

__version__ = "0.1.0"

from .sharing import (  # noqa: F401
    ArithShare,
    BoolShare,
    RingSpec,
    SeededRng,
    arith_reconstruct,
    arith_share,
    bool_reconstruct,
    bool_share,
)
from .circuit import (  # noqa: F401
    Circuit,
    GateKind,
    build_inner_product,
    build_millionaire,
    eval_plaintext,
)
from .triples import (  # noqa: F401
    ArithTriplePool,
    BoolTriplePool,
    deal_arith_triples,
    deal_bool_triples,
)
from .runtime import (  # noqa: F401
    ExecPlan,
    Session,
    build_exec_plan,
    run_lockstep,
    run_threaded_pair,
)
from .profiling import (  # noqa: F401
    OnlineReport,
    render_report,
    run_loopback_experiment,
    sweep,
)
