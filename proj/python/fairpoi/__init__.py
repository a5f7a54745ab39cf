"""Multi-sided fairness post-filtering for POI recommendation."""

from ._core import (  # noqa: F401
    BaseModel,
    CapabilityError,
    ConfigError,
    ConsumerContext,
    DataError,
    Dataset,
    ExposureModel,
    GroupAssignment,
    PopularityHistogram,
    RecommendationList,
    ScoredCandidates,
    SplitDataset,
    __version__,
    assign_groups,
    build_consumer_context,
    build_popularity_histogram,
    chronological_split,
    consumer_score,
    dataset_stats,
    filter_sparse,
    fit_linear,
    fit_logistic,
    fit_power_law,
    gce,
    generate_synthetic,
    haversine_km,
    kruskal_wallis,
    load_dataset,
    mann_whitney_u,
    pareto_front,
    precision_at_k,
    rescore,
    run_sweep,
    top_k,
    train_model,
    wilcoxon_signed_rank,
)
