from hypothesis import settings

# Single shared profile: no wall-clock deadline (single-core box, timing noise)
# and a bounded example count so the whole suite stays fast.
settings.register_profile("suite", deadline=None, max_examples=50)
settings.load_profile("suite")
