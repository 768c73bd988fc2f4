import yaml
import os

from errors import ConfigError


# Flat keys accepted on the command line and in batch files, mapped to schema sections.
FLAG_KEYS = {
    'task': ('experiment', 'task'),
    'algo': ('experiment', 'algo'),
    'algos': ('experiment', 'algos'),
    'seeds': ('experiment', 'seeds'),
    'seed': ('experiment', 'seeds'),
    'data': ('data', 'path'),
    'source': ('data', 'source'),
    'm': ('data', 'm'),
    'n': ('data', 'n'),
    'kappa': ('data', 'kappa'),
    'delta': ('data', 'delta'),
    'start': ('data', 'start'),
    's': ('solver', 's'),
    's_prime': ('solver', 's_prime'),
    'eta_spec': ('solver', 'eta_spec'),
    'eta': ('solver', 'eta'),
    'c_spec': ('solver', 'c_spec'),
    'c': ('solver', 'c'),
    'iters': ('solver', 'iters'),
    'rho': ('solver', 'rho'),
    'revert': ('solver', 'revert'),
    'theory_mode': ('solver', 'theory_mode'),
    'eps': ('solver', 'eps'),
    'round_th': ('solver', 'round_th'),
    'step_form': ('solver', 'step_form'),
    'early_stop': ('solver', 'early_stop'),
    'r': ('lowrank', 'r'),
    'r_prime': ('lowrank', 'r_prime'),
    'c_values': ('sweep', 'c_values'),
    's_values': ('sweep', 's_values'),
    'out': ('output', 'out'),
    'workers': ('misc', 'workers'),
}

_TYPES = {
    'str': (str,),
    'text': (str,),
    'int': (int,),
    'float': (int, float),
    'bool': (bool,),
    'list': (list, tuple),
}


class ConfigManager:
    _instance = None

    def __init__(self):
        """Initialize the ConfigManager instance."""
        self.config = None
        self.schema = None
        self.config_path = None

    @classmethod
    def initialize(cls, schema_path=None, config_path=None):
        """Initialize the ConfigManager with the given schema path."""
        if cls._instance is None:
            cls._instance = cls()
            cls._instance.config_path = config_path or default_config_path()
            cls._instance.schema = cls._instance.load_config_schema(schema_path)
            cls._instance.config = cls._instance.load_default_config()
            cls._instance.load_user_config(cls._instance.config_path)

    @classmethod
    def _require(cls):
        if cls._instance is None:
            raise ConfigError("ConfigManager not initialized")
        return cls._instance

    @classmethod
    def reset(cls):
        """Drop the current instance so the next initialize() starts from scratch."""
        cls._instance = None

    @classmethod
    def get_schema(cls):
        """Get the configuration schema."""
        return cls._require().schema

    @classmethod
    def get_config_section(cls, *keys):
        """Get a specific section of the configuration."""
        section = cls._require().config
        for key in keys:
            if isinstance(section, dict) and key in section:
                section = section[key]
            else:
                return {}
        return section

    @classmethod
    def get_config_value(cls, *keys):
        """Get a specific configuration value using nested keys."""
        value = cls._require().config
        for key in keys:
            if isinstance(value, dict) and key in value:
                value = value[key]
            else:
                return None
        return value

    @classmethod
    def set_config_value(cls, value, *keys):
        """Set a specific configuration value using nested keys."""
        config = cls._require().config
        for key in keys[:-1]:
            if key not in config:
                config[key] = {}
            elif not isinstance(config[key], dict):
                config[key] = {}
            config = config[key]
        config[keys[-1]] = value

    @classmethod
    def apply_overrides(cls, overrides):
        """Apply a mapping of flat flag keys (or 'section.key' paths) on top of the config.

        Values of None are skipped so that unset CLI flags keep the file/default value.
        """
        for key, value in overrides.items():
            if value is None:
                continue
            if key in FLAG_KEYS:
                path = FLAG_KEYS[key]
            elif '.' in key:
                path = tuple(key.split('.'))
            else:
                raise ConfigError(f"Unknown configuration key '{key}'")
            if key == 'seed':
                value = [value]
            cls.set_config_value(value, *path)
            # A fixed value given for eta/c implies the fixed rule.
            if key == 'eta':
                cls.set_config_value('fixed', 'solver', 'eta_spec')
            elif key == 'c':
                cls.set_config_value('fixed', 'solver', 'c_spec')
            elif key == 'data':
                cls.set_config_value('svmlight', 'data', 'source')

    @classmethod
    def validate(cls):
        """Check every configured value against the schema type and options."""
        schema = cls.get_schema()
        for category, settings in schema.items():
            for name, spec in settings.items():
                value = cls.get_config_value(category, name)
                if value is None:
                    continue
                expected = _TYPES.get(spec.get('type'), (object,))
                # bool is an int subclass; keep the two apart
                if isinstance(value, bool) and bool not in expected:
                    raise ConfigError(f'{category}.{name}: expected {spec.get("type")}, got bool')
                if not isinstance(value, expected):
                    raise ConfigError(
                        f'{category}.{name}: expected {spec.get("type")}, got {type(value).__name__}')
                options = spec.get('options')
                if options and value not in options:
                    raise ConfigError(f'{category}.{name}: {value!r} is not one of {options}')

    @staticmethod
    def load_config_schema(schema_path=None):
        """Load the configuration schema from a YAML file."""
        if schema_path is None:
            base_dir = os.path.dirname(os.path.abspath(__file__))
            schema_path = os.path.join(base_dir, 'config_schema.yaml')

        with open(schema_path, 'r') as file:
            schema = yaml.safe_load(file)
        return schema

    def load_default_config(self):
        """Load default configuration values from the schema."""
        def extract_value(item):
            if isinstance(item, dict):
                if 'value' in item:
                    return item['value']
                else:
                    return {k: extract_value(v) for k, v in item.items()}
            return item

        config = {}
        for category, settings in self.schema.items():
            config[category] = extract_value(settings)
        return config

    def load_user_config(self, config_path=None):
        """Load user configuration and merge with default config.

        Flat keys (the CLI flag names) are accepted next to nested sections.
        """
        def deep_update(source, overrides):
            for key, value in overrides.items():
                if isinstance(value, dict) and key in source:
                    deep_update(source[key], value)
                else:
                    source[key] = value

        if config_path and os.path.isfile(config_path):
            try:
                with open(config_path, 'r') as file:
                    user_config = yaml.safe_load(file) or {}
            except yaml.YAMLError as e:
                raise ConfigError(f"Error in configuration file {config_path}: {e}")
            if not isinstance(user_config, dict):
                raise ConfigError(f"Configuration file {config_path} must hold a mapping")
            nested = {k: v for k, v in user_config.items() if isinstance(v, dict)}
            flat = {k: v for k, v in user_config.items() if not isinstance(v, dict)}
            deep_update(self.config, nested)
            for key, value in flat.items():
                if key not in FLAG_KEYS:
                    raise ConfigError(f"Unknown configuration key '{key}' in {config_path}")
                section, name = FLAG_KEYS[key]
                if key == 'seed':
                    value = [value]
                self.config[section][name] = value
                if key == 'eta' and value is not None:
                    self.config['solver']['eta_spec'] = 'fixed'
                elif key == 'c' and value is not None:
                    self.config['solver']['c_spec'] = 'fixed'
                elif key == 'data' and value is not None:
                    self.config['data']['source'] = 'svmlight'

    @classmethod
    def save_config(cls, config_path=None):
        """Save the current configuration to a YAML file."""
        inst = cls._require()
        with open(config_path or inst.config_path, 'w') as file:
            yaml.dump(inst.config, file, default_flow_style=False)

    @classmethod
    def reload_config(cls):
        """Rebuild the configuration from the schema defaults and the user file."""
        inst = cls._require()
        inst.config = inst.load_default_config()
        inst.load_user_config(inst.config_path)

    @classmethod
    def console_print(cls, message):
        """Print a message to the console if enabled in the configuration."""
        if cls._instance and cls._instance.config['misc']['print_to_terminal']:
            print(message)

    @classmethod
    def should_log_iteration(cls, it):
        """True when per-iteration logging is on and `it` falls on the logging period."""
        if cls._instance is None:
            return False
        every = cls._instance.config['misc'].get('log_every') or 0
        return every > 0 and it % every == 0


def default_config_path():
    return os.getenv('REGSPARSE_CONFIG') or os.path.join('src', 'config.yaml')
