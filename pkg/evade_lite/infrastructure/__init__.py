# Infrastructure layer for evade-lite (datasets, models, remote transport, artifacts)
