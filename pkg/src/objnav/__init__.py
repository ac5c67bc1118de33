"""ObjectGoal navigation laboratory."""
