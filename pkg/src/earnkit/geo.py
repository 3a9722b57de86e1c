"""Census division and industry-sector code tables."""

# Census geography divisions, keyed by two-letter state code.
DIVISION_STATES = {
    1: ["CT", "ME", "MA", "NH", "RI", "VT"],
    2: ["NJ", "NY", "PA"],
    3: ["IN", "IL", "MI", "OH", "WI"],
    4: ["IA", "KS", "MN", "MO", "NE", "ND", "SD"],
    5: ["DE", "DC", "FL", "GA", "MD", "NC", "SC", "VA", "WV"],
    6: ["AL", "KY", "MS", "TN"],
    7: ["AR", "LA", "OK", "TX"],
    8: ["AZ", "CO", "ID", "NM", "MT", "UT", "NV", "WY"],
    9: ["AK", "CA", "HI", "OR", "WA"],
}

DIVISION_NAMES = {
    1: "New England",
    2: "Middle Atlantic",
    3: "East North Central",
    4: "West North Central",
    5: "South Atlantic",
    6: "East South Central",
    7: "West South Central",
    8: "Mountain",
    9: "Pacific",
}

STATE_TO_DIVISION = {
    state: div for div, states in DIVISION_STATES.items() for state in states
}

# NAICS 2017 sector letter codes.
INDUSTRY_SECTORS = {
    "A": "Agriculture, Forestry, Fishing and Hunting",
    "B": "Mining, Quarrying, and Oil and Gas Extraction",
    "C": "Utilities",
    "D": "Construction",
    "E": "Manufacturing",
    "F": "Wholesale Trade",
    "G": "Retail Trade",
    "H": "Transportation and Warehousing",
    "I": "Information",
    "J": "Finance and Insurance",
    "K": "Real Estate and Rental and Leasing",
    "L": "Professional, Scientific, and Technical Services",
    "M": "Management of Companies and Enterprises",
    "N": "Administrative and Support and Waste Management and Remediation Services",
    "O": "Educational Services",
    "P": "Health Care and Social Assistance",
    "Q": "Arts, Entertainment, and Recreation",
    "R": "Accommodation and Food Services",
    "S": "Other Services (exc. Public Administration)",
    "T": "Public Administration",
}

SECTOR_LETTERS = sorted(INDUSTRY_SECTORS)

# States whose UI systems report hours worked.
HOURS_REPORTING_STATES = ("WA", "OR", "RI", "MN")


def division_for_state(state: str) -> int:
    """Census division number (1-9) for a two-letter state code."""
    try:
        return STATE_TO_DIVISION[state]
    except KeyError:
        raise ValueError(f"unknown state code: {state!r}") from None
