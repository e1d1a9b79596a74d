"""Allow ``python -m bb84sim``."""

from .cli import main

raise SystemExit(main())
