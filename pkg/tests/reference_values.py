"""Published per-case results (ATD, TEC, CP) used as fixed inputs for the CP check."""

METHODS = ("Heuristics", "User Only", "Centralized", "Proposed(10)", "Proposed(20)", "Proposed(25)")

REFERENCE_RESULTS = {
    "case1": {
        "Heuristics": (0.113, 21.260, 0.613),
        "User Only": (0.491, 14.574, 0.833),
        "Centralized": (0.501, 20.277, 0.977),
        "Proposed(10)": (0.256, 14.237, 0.590),
        "Proposed(20)": (0.184, 16.576, 0.573),
        "Proposed(25)": (0.088, 17.746, 0.505),
    },
    "case2": {
        "Heuristics": (0.109, 19.793, 0.605),
        "User Only": (0.098, 11.791, 0.392),
        "Centralized": (0.520, 15.531, 0.892),
        "Proposed(10)": (0.117, 9.247, 0.346),
        "Proposed(20)": (0.076, 11.438, 0.362),
        "Proposed(25)": (0.081, 9.752, 0.324),
    },
    "case3": {
        "Heuristics": (0.107, 22.200, 0.558),
        "User Only": (0.181, 14.280, 0.420),
        "Centralized": (0.917, 22.045, 0.997),
        "Proposed(10)": (0.377, 12.698, 0.492),
        "Proposed(20)": (0.189, 13.985, 0.418),
        "Proposed(25)": (0.147, 14.645, 0.410),
    },
}
