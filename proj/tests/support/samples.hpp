#pragma once

namespace hsd::fixtures {

struct Golden {
    const char* input;
    const char* expected;
};

// Sample tweets from the English training data, one per 1B class, with the
// output of the default preprocessing pipeline.
inline constexpr Golden kSampleTweets[] = {
    {"This is enough of yours Modi This is not skill India it is kill India @narendramodi #ExitModi "
     "#Resign_PM_Modi https://t.co/m9FZyU4Lfg",
     "This is enough of yours Modi This is not skill India it is kill India username #ExitModi "
     "#Resign_PM_Modi link"},
    {"Please, abdicate! You failed us. You failed everyone. Everyone is suffering. EVERYONE! "
     "#ModiKaVaccineJumla",
     "Please, abdicate! You failed us. You failed everyone. Everyone is suffering. EVERYONE! "
     "#ModiKaVaccineJumla"},
    {" @Feisty_Waters Ok. What did you do to piss off the universe?  ",
     "username Ok. What did you do to piss off the universe?"},
    {"@ndtv Nothing gonna help you please #Resign_PM_Modi",
     "username Nothing gonna help you please #Resign_PM_Modi"},
};

} // namespace hsd::fixtures
