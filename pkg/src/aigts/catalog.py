"""App category catalog.

The built-in catalog follows the Google Play subcategories grouped into eight
upper categories, seeded with the most-used apps observed for each.
"""

import json
from dataclasses import dataclass, field

UNCATEGORIZED = "Uncategorized"

UPPER_CATEGORIES = (
    "Business",
    "Communication",
    "Entertainment",
    "Productivity",
    "Reading",
    "Social",
    "Tools",
    "Others",
)

# notification sources counted as num_communication
COMMUNICATION_UPPER = frozenset({"Business", "Communication", "Social"})

# subcategory -> (upper category, known app ids)
_DEFAULT = {
    "Business": ("Business", ["Teams", "LinkedIn", "Zoom"]),
    "Communication": ("Communication", ["Chrome", "Discord", "WeChat"]),
    "Action": ("Entertainment", ["Among Us"]),
    "Casual": ("Entertainment", ["Scrap Collector", "IdleCourier"]),
    "Comics": ("Entertainment", ["TachiyomiJ2K"]),
    "Travel & Local": ("Entertainment", ["Maps", "PTV"]),
    "Video Players & Editors": ("Entertainment", ["YouTube", "Bilibili", "YouTube Vanced"]),
    "Entertainment": ("Entertainment", ["Wow", "Steam", "RainbowSix"]),
    "Food & Drink": ("Entertainment", ["Uber Eats", "Menulog", "Mymacca's"]),
    "Health & Fitness": ("Entertainment", ["Samsung Health", "Nike Training"]),
    "Photography": ("Entertainment", ["Photos", "Gallery"]),
    "Music & Audio": ("Entertainment", ["Google Play Music", "Spotify", "YouTube Music"]),
    "Role Playing": ("Entertainment", ["Fate/GO"]),
    "Shopping": ("Entertainment", ["BIGAU", "Gumtree", "Depop"]),
    "Productivity": ("Productivity", ["Excel", "Outlook", "PowerPoint"]),
    "Education": ("Productivity", ["Canvas Student"]),
    "Books & Reference": ("Reading", ["Audible", "AniDroid", "MendeleyDesktop"]),
    "News & Magazines": ("Reading", ["Joey", "Twitter", "Sync Dev"]),
    "Social": ("Social", ["Facebook", "com.facebook.katana", "Instagram", "Snapchat"]),
    "Tools": ("Tools", ["Gboard", "Explorer", "Samsung Keyboard"]),
    "Auto & Vehicles": ("Others", ["Android Auto"]),
    "Finance": ("Others", ["CommBank", "CommSec", "Up"]),
    "House & Home": ("Others", ["Domain", "Realestate"]),
    "Lifestyle": ("Others", ["Samsung Pay", "Tinder", "Hue"]),
    "Medical": ("Others", ["MyTherapy", "E4 realtime"]),
    "Parenting": ("Others", ["FamilyAlbum"]),
    "Personalization": ("Others", ["One UI Home", "OnePlus Launcher", "TouchWiz home"]),
}


@dataclass
class CategoryCatalog:
    app_to_sub: dict = field(default_factory=dict)
    sub_to_upper: dict = field(default_factory=dict)

    def __post_init__(self):
        for app, sub in self.app_to_sub.items():
            if sub not in self.sub_to_upper:
                raise ValueError(f"app {app!r} maps to unknown subcategory {sub!r}")

    @property
    def subcategories(self):
        """Subcategories in a stable (sorted) order; defines channel order."""
        return sorted(self.sub_to_upper)

    def lookup(self, app_id):
        sub = self.app_to_sub.get(app_id)
        if sub is None:
            return UNCATEGORIZED, UNCATEGORIZED
        return sub, self.sub_to_upper[sub]

    def apps_in(self, subcategory):
        return sorted(a for a, s in self.app_to_sub.items() if s == subcategory)

    def to_dict(self):
        return {
            "app_to_subcategory": dict(sorted(self.app_to_sub.items())),
            "subcategory_to_upper": dict(sorted(self.sub_to_upper.items())),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(dict(d["app_to_subcategory"]), dict(d["subcategory_to_upper"]))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def default_catalog():
    app_to_sub = {}
    for sub, (_, apps) in _DEFAULT.items():
        for app in apps:
            app_to_sub[app] = sub
    return CategoryCatalog(app_to_sub, {sub: up for sub, (up, _) in _DEFAULT.items()})


def map_app_to_category(app_id, catalog):
    """Return ``(subcategory, upper_category)``; unknown apps are Uncategorized."""
    return catalog.lookup(app_id)
