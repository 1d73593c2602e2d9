"""The five driving-action classes and their fixed integer encoding."""

ACTION_NAMES = ("accelerate", "decelerate", "turn_left", "turn_right", "stop")

ACCELERATE, DECELERATE, TURN_LEFT, TURN_RIGHT, STOP = range(5)

NUM_ACTIONS = len(ACTION_NAMES)

_NAME_TO_CODE = {name: code for code, name in enumerate(ACTION_NAMES)}


def action_code(name: str) -> int:
    try:
        return _NAME_TO_CODE[name]
    except KeyError:
        raise ValueError(f"unknown action {name!r}; expected one of {ACTION_NAMES}") from None


def action_name(code: int) -> str:
    if not 0 <= code < NUM_ACTIONS:
        raise ValueError(f"action code {code} out of range [0, {NUM_ACTIONS - 1}]")
    return ACTION_NAMES[code]
