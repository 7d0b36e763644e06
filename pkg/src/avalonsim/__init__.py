"""Six-player Avalon with belief-propagation agents.

Subpackages split along the pipeline: game rules (game), observation codecs
(codec), factor-graph inference (inference), the learned conditional model
(factor_model), language priors and chat (language), agent policies (agents),
game orchestration (runner), evaluation (harness), and the play server
(server).
"""

__version__ = "0.1.0"

from .game import (  # noqa: F401
    N_EVIL,
    N_PLAYERS,
    N_QUESTS,
    PARTY_SCHEDULE,
    GameRecord,
    GameState,
    Outcome,
    Phase,
    Role,
    new_game,
    winner,
)
