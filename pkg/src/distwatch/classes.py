"""Class registries for the supported detector taxonomies."""

from __future__ import annotations

from dataclasses import dataclass, field

VISDRONE_CLASSES = (
    "Pedestrian",
    "People",
    "Bicycle",
    "Car",
    "Van",
    "Truck",
    "Tricycle",
    "Awning-tricycle",
    "Bus",
    "Motor",
)

COCO_CLASSES = (
    "person", "bicycle", "car", "motorcycle", "airplane", "bus", "train",
    "truck", "boat", "traffic light", "fire hydrant", "stop sign",
    "parking meter", "bench", "bird", "cat", "dog", "horse", "sheep", "cow",
    "elephant", "bear", "zebra", "giraffe", "backpack", "umbrella",
    "handbag", "tie", "suitcase", "frisbee", "skis", "snowboard",
    "sports ball", "kite", "baseball bat", "baseball glove", "skateboard",
    "surfboard", "tennis racket", "bottle", "wine glass", "cup", "fork",
    "knife", "spoon", "bowl", "banana", "apple", "sandwich", "orange",
    "broccoli", "carrot", "hot dog", "pizza", "donut", "cake", "chair",
    "couch", "potted plant", "bed", "dining table", "toilet", "tv",
    "laptop", "mouse", "remote", "keyboard", "cell phone", "microwave",
    "oven", "toaster", "sink", "refrigerator", "book", "clock", "vase",
    "scissors", "teddy bear", "hair drier", "toothbrush",
)


@dataclass(frozen=True)
class ClassRegistry:
    """Ordered class names plus the subset treated as persons."""

    name: str
    classes: tuple[str, ...]
    person_like: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        if not all(0 <= i < len(self.classes) for i in self.person_like):
            raise ValueError("person_like indices out of range")

    def __len__(self) -> int:
        return len(self.classes)

    def class_name(self, class_id: int) -> str:
        return self.classes[class_id]

    def is_person(self, class_id: int) -> bool:
        return class_id in self.person_like


COCO = ClassRegistry("coco", COCO_CLASSES, frozenset({0}))
VISDRONE = ClassRegistry("visdrone", VISDRONE_CLASSES, frozenset({0, 1}))

_REGISTRIES = {"coco": COCO, "visdrone": VISDRONE}


def get_registry(name: str) -> ClassRegistry:
    try:
        return _REGISTRIES[name.lower()]
    except KeyError:
        raise KeyError(f"unknown class registry {name!r}; choose from {sorted(_REGISTRIES)}")


def registry_from_names(names, person_like=None) -> ClassRegistry:
    """Build a registry from an explicit class-name list (model sidecar path).

    Person-like ids default to names matching the built-in person classes.
    """
    names = tuple(names)
    if person_like is None:
        lowered = {"person", "pedestrian", "people"}
        person_like = frozenset(i for i, n in enumerate(names) if n.lower() in lowered)
    return ClassRegistry("custom", names, frozenset(person_like))
