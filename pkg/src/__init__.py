# V2V AoI-tail simulator package
